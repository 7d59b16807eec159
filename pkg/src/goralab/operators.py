"""Label-resolution operators.

A candidate sample has one hypothetical utility value per class label; a
resolver turns that K-vector into a single scalar:

* ``expectation`` -- weighted mean under a label distribution
* ``min`` / ``max`` -- pessimistic / optimistic extremes
* ``oracle``      -- the entry at the (normally hidden) true label

Label distributions for the expectation resolver come from a
:class:`LabelDist`: the model's own prediction, the uniform distribution, a
tempered reshaping of the model's prediction (``q ~ p^(1/T)``), or an external
per-sample table.

Batch resolution is the decomposable extension: resolve each sample's own
value vector independently and sum.  (A non-decomposable joint min/max over
labelings exists only inside the exact retraining oracle.)

Config spec strings: ``expectation:model``, ``expectation:uniform``,
``expectation:tempered:<T>``, ``min``, ``max``, ``oracle``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LabelDist",
    "LabelResolver",
    "resolve",
    "resolve_batch",
    "tempered_distribution",
    "distribution_for",
    "parse_resolver",
    "resolver_spec",
    "RESOLVER_KINDS",
    "DIST_KINDS",
]

RESOLVER_KINDS = ("expectation", "min", "max", "oracle")
DIST_KINDS = ("model_prediction", "uniform", "tempered", "external")

_P_FLOOR = 1e-300


@dataclass(frozen=True)
class LabelDist:
    """A source of per-sample label distributions for expectation resolvers."""

    kind: str
    T: float | None = None
    table: dict | None = None  # sample id -> probability vector, for 'external'

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "tempered":
            if self.T is None or not (self.T > 0):
                raise ValueError("tempered distribution needs T > 0")
        if self.kind == "external" and not self.table:
            raise ValueError("external distribution needs a non-empty table")


@dataclass(frozen=True)
class LabelResolver:
    """A resolution operator; ``dist`` is required iff kind == 'expectation'."""

    kind: str
    dist: LabelDist | None = None

    def __post_init__(self):
        if self.kind not in RESOLVER_KINDS:
            raise ValueError(f"unknown resolver kind {self.kind!r}")
        if self.kind == "expectation" and self.dist is None:
            raise ValueError("expectation resolver needs a label distribution")
        if self.kind != "expectation" and self.dist is not None:
            raise ValueError(f"{self.kind} resolver takes no distribution")


def tempered_distribution(p: np.ndarray, T: float) -> np.ndarray:
    """Reshape a probability vector as ``q ~ p^(1/T)``, computed in log space.

    T = 1 is the identity; T -> infinity flattens toward uniform; T -> 0
    concentrates on the argmax (exact ties keep their shared mass).
    """
    if not (T > 0 and np.isfinite(T)):
        raise ValueError(f"T must be positive and finite, got {T}")
    p = np.asarray(p, dtype=float)
    logits = np.log(np.maximum(p, _P_FLOOR)) / T
    logits -= np.max(logits)
    q = np.exp(logits)
    return q / np.sum(q)


def distribution_for(dist: LabelDist, p_model: np.ndarray,
                     sample_id: int | None = None) -> np.ndarray:
    """Materialize the distribution a resolver should use for one sample."""
    if dist.kind == "model_prediction":
        return np.asarray(p_model, dtype=float)
    if dist.kind == "uniform":
        K = len(p_model)
        return np.full(K, 1.0 / K)
    if dist.kind == "tempered":
        return tempered_distribution(p_model, dist.T)
    if dist.kind == "external":
        if sample_id is None or sample_id not in dist.table:
            raise KeyError(f"no external distribution for sample id {sample_id}")
        q = np.asarray(dist.table[sample_id], dtype=float)
        if q.shape != np.shape(p_model) or np.any(q < 0) or not np.isclose(q.sum(), 1.0):
            raise ValueError(f"external table entry for id {sample_id} is not a "
                             f"probability vector over {len(p_model)} classes")
        return q
    raise ValueError(f"unknown distribution kind {dist.kind!r}")


def resolve(values: np.ndarray, resolver: LabelResolver,
            p: np.ndarray | None = None, true_label: int | None = None) -> float:
    """Collapse a per-label value vector to a scalar.

    ``p`` is the already-materialized distribution (expectation only);
    ``true_label`` is required for the oracle resolver.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError(f"values must be a K-vector with K >= 2, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("values contain non-finite entries")
    if resolver.kind == "expectation":
        if p is None:
            raise ValueError("expectation resolver needs p")
        p = np.asarray(p, dtype=float)
        if p.shape != values.shape:
            raise ValueError("p and values shapes differ")
        return float(np.dot(p, values))
    if resolver.kind == "min":
        return float(np.min(values))
    if resolver.kind == "max":
        return float(np.max(values))
    if resolver.kind == "oracle":
        if true_label is None:
            raise ValueError("oracle resolver needs the true label")
        if not (0 <= true_label < values.size):
            raise ValueError(f"true label {true_label} out of range")
        return float(values[true_label])
    raise ValueError(f"unknown resolver kind {resolver.kind!r}")


def resolve_batch(values_rows: np.ndarray, resolver: LabelResolver,
                  p_rows: np.ndarray | None = None,
                  true_labels=None) -> float:
    """Decomposable batch resolution: per-row :func:`resolve`, summed in row order."""
    values_rows = np.atleast_2d(np.asarray(values_rows, dtype=float))
    total = 0.0
    for i in range(values_rows.shape[0]):
        total += resolve(
            values_rows[i], resolver,
            p=None if p_rows is None else np.asarray(p_rows)[i],
            true_label=None if true_labels is None else int(true_labels[i]))
    return total


# ---------------------------------------------------------------------------
# spec strings
# ---------------------------------------------------------------------------


def parse_resolver(spec: str) -> LabelResolver:
    """Parse a resolver spec string (see module docstring for the grammar)."""
    parts = spec.strip().split(":")
    head = parts[0]
    if head in ("min", "max", "oracle"):
        if len(parts) != 1:
            raise ValueError(f"resolver {head!r} takes no arguments: {spec!r}")
        return LabelResolver(head)
    if head == "expectation":
        if len(parts) < 2:
            raise ValueError(f"expectation resolver needs a distribution: {spec!r}")
        dkind = parts[1]
        if dkind == "model" and len(parts) == 2:
            return LabelResolver("expectation", LabelDist("model_prediction"))
        if dkind == "uniform" and len(parts) == 2:
            return LabelResolver("expectation", LabelDist("uniform"))
        if dkind == "tempered" and len(parts) == 3:
            return LabelResolver("expectation", LabelDist("tempered", T=float(parts[2])))
        raise ValueError(f"bad expectation distribution in {spec!r}")
    raise ValueError(f"unknown resolver spec {spec!r}")


def resolver_spec(resolver: LabelResolver) -> str:
    """Inverse of :func:`parse_resolver` (external tables have no spec string)."""
    if resolver.kind != "expectation":
        return resolver.kind
    d = resolver.dist
    if d.kind == "model_prediction":
        return "expectation:model"
    if d.kind == "uniform":
        return "expectation:uniform"
    if d.kind == "tempered":
        return f"expectation:tempered:{d.T:g}"
    raise ValueError("external distributions have no spec-string form")
