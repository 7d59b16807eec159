"""Influence-function approximation of sample utilities, plus retraining oracles.

The goal-oriented utility of acquiring a candidate ``(x, y)`` is the goal
change after retraining with that sample added at unit weight:

    exact_utility(x) = resolve_y[ tau(theta_{(x,y)}) ] - tau(theta_hat)

Retraining per candidate is exact but expensive.  The influence approximation
differentiates the goal along the retraining path at the current optimum: with
``H`` the mean per-sample loss Hessian and ``g = grad tau(theta_hat)``, the
engine caches the vector

    v = -(1/n) H^{-1} g

after which a candidate's per-label utility is the inner product
``v . grad R((x,y), theta_hat)``: one cached linear solve total, then K cheap
dot products per candidate.  ``influence(z) = n * v . grad R(z)`` is the raw
derivative of the goal with respect to the candidate's weight.

Two structural facts follow from the closed form and are preserved exactly:

* resolving by expectation under the model's *own* prediction collapses the
  approximate utility to the candidate-independent constant ``lam * v . theta``
  (the score's conditional mean is zero), so that resolver cannot rank samples;
* the approximate utility of a batch is the sum of its members' serial
  utilities, which justifies greedy top-b selection.

``ExactOracle`` provides the retraining ground truth (serial and batch, any
resolver), sharing one retraining sweep per candidate/batch across resolvers.
``EpsRetrainer`` exposes epsilon-weighted retraining for finite-difference
checks of the influence values.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .datasets import LabeledSample, Sample
from .goals import Goal
from .model import (ModelParams, TrainConfig, _log_softmax_rows, augment,
                    fit_weighted, stack_features, stack_labeled, train, unvec, vec)
from .operators import LabelResolver, distribution_for, tempered_distribution

__all__ = [
    "SolverConfig",
    "SolverError",
    "StationarityError",
    "InfluenceEngine",
    "build_engine",
    "influence",
    "batch_influence",
    "approx_utility",
    "approx_utilities",
    "approx_batch_utility",
    "remark1_constant",
    "ExactOracle",
    "exact_utility",
    "exact_batch_utility",
    "resolve_taudiffs",
    "resolve_taudiff_table",
    "labeling_index",
    "EpsRetrainer",
]

# Above this flat dimension the engine's linear solve switches from a direct
# dense solve to conjugate gradients on the matrix-free Hessian product.
_DENSE_SOLVE_CUTOFF = 300

# Gate on enumerating all K^b joint labelings in the exact batch oracle.
_MAX_JOINT_LABELINGS = 4096

# The engine refuses to build on a model whose mean training gradient exceeds
# this (the influence expansion assumes stationarity).
_STATIONARITY_TOL = 1e-6


class SolverError(RuntimeError):
    """Raised when the cached-vector linear solve misses its residual tolerance."""


class StationarityError(ValueError):
    """Raised when the supplied model is not a stationary point of its objective."""


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the cached-vector solve.

    ``residual_tol`` is relative: the solve must achieve
    ``||H v + (1/n) grad tau|| <= residual_tol * ||(1/n) grad tau||``.
    ``max_cg_iter`` defaults to 10 * (d+1) * K.  ``damping`` adds a ridge to
    the Hessian before solving (and the residual is then checked against the
    damped operator).  Small systems are solved densely, which satisfies the
    same residual contract.
    """

    residual_tol: float = 1e-10
    max_cg_iter: int | None = None
    damping: float = 0.0

    def __post_init__(self):
        if not (self.residual_tol > 0):
            raise ValueError("residual_tol must be positive")
        if self.damping < 0:
            raise ValueError("damping must be >= 0")


class InfluenceEngine:
    """Frozen state for fast approximate utilities at one trained model.

    Holds the model, its training set and L2 strength, the goal, and the
    cached solve vector ``v``.  Build with :func:`build_engine`.
    """

    def __init__(self, model: ModelParams, train_set, lam: float, goal: Goal,
                 v: np.ndarray, solver: SolverConfig, diagnostics: dict):
        self.model = model
        self.train_set = tuple(train_set)
        self.n = len(self.train_set)
        self.lam = float(lam)
        self.goal = goal
        self.v = np.array(v, dtype=float)
        self.v.setflags(write=False)
        self.V = unvec(self.v, model.theta.shape[0], model.K)
        self.solver = solver
        self.diagnostics = dict(diagnostics)
        # Candidate-independent expectation-under-own-prediction value.
        self._const = self.lam * float(np.sum(self.V * model.theta))

    # -- scoring -----------------------------------------------------------

    def per_label_values(self, X: np.ndarray):
        """Rows of per-label products ``v . grad R((x,y))`` plus model probabilities.

        ``X`` is (N, d) raw features; returns ``(values, P)`` both (N, K).
        """
        Xa = augment(X)
        if Xa.shape[1] != self.model.theta.shape[0]:
            raise ValueError("feature dimension does not match engine model")
        P = np.exp(_log_softmax_rows(Xa @ self.model.theta))
        A = Xa @ self.V
        values = self._const - A + np.sum(A * P, axis=1, keepdims=True)
        return values, P

    def approx_utilities(self, samples, resolver: LabelResolver,
                         hidden_labels=None) -> np.ndarray:
        """Vectorized approximate utilities for a sequence of Samples."""
        X = stack_features(samples)
        values, P = self.per_label_values(X)
        if resolver.kind == "min":
            return values.min(axis=1)
        if resolver.kind == "max":
            return values.max(axis=1)
        if resolver.kind == "oracle":
            if hidden_labels is None:
                raise ValueError("oracle resolver needs hidden labels")
            labels = np.asarray(hidden_labels, dtype=int)
            return values[np.arange(len(labels)), labels]
        dist = resolver.dist
        if dist.kind == "model_prediction":
            W = P
        elif dist.kind == "uniform":
            W = np.full_like(P, 1.0 / P.shape[1])
        elif dist.kind == "tempered":
            W = np.array([tempered_distribution(row, dist.T) for row in P])
        else:  # external
            ids = [s.sample.id if isinstance(s, LabeledSample) else s.id for s in samples]
            W = np.array([distribution_for(dist, P[i], ids[i]) for i in range(len(ids))])
        return np.sum(W * values, axis=1)

    def approx_utility(self, x: Sample, resolver: LabelResolver,
                       hidden_label: int | None = None) -> float:
        """Approximate utility of one candidate sample under a resolver."""
        labels = None if hidden_label is None else [hidden_label]
        return float(self.approx_utilities([x], resolver, labels)[0])

    def influence(self, z: LabeledSample) -> float:
        """Raw influence ``n * v . grad R(z, theta_hat)`` of one labeled sample."""
        values, _ = self.per_label_values(z.sample.features[None, :])
        return float(self.n * values[0, z.label])

    def remark1_constant(self) -> float:
        """The constant ``lam * v . theta`` every expectation-under-model utility equals."""
        return self._const

    def dump_diagnostics(self, path) -> None:
        """Write the cached vector and solve diagnostics to a JSON file."""
        payload = dict(self.diagnostics)
        payload.update({
            "n": self.n, "lam": self.lam, "goal": self.goal.kind,
            "remark1_constant": self.remark1_constant(),
            "v": [float(t) for t in self.v],
        })
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, sort_keys=True, indent=2))


def _training_grad_inf_norm(Xa, y, theta, lam):
    n = Xa.shape[0]
    P = np.exp(_log_softmax_rows(Xa @ theta))
    Y = np.zeros_like(P)
    Y[np.arange(n), y] = 1.0
    G = lam * theta + Xa.T @ ((P - Y) / n)
    return float(np.max(np.abs(G)))


def build_engine(model: ModelParams, train_set, lam: float, goal: Goal,
                 solver: SolverConfig | None = None) -> InfluenceEngine:
    """Solve for the cached vector and freeze an engine.

    Verifies that ``model`` is stationary for its training objective (mean
    gradient inf-norm below 1e-6), solves ``(H + damping I) v = -(1/n) grad tau``,
    and checks the relative residual against ``solver.residual_tol``.
    """
    solver = solver or SolverConfig()
    if not (lam > 0):
        raise ValueError("lam must be positive")
    X, y = stack_labeled(train_set)
    Xa = augment(X)
    if Xa.shape[1] != model.theta.shape[0]:
        raise ValueError("training features do not match model dimension")
    g_norm = _training_grad_inf_norm(Xa, y, model.theta, lam)
    if g_norm >= _STATIONARITY_TOL:
        raise StationarityError(
            f"model is not stationary: mean-gradient inf-norm {g_norm:.3e} "
            f">= {_STATIONARITY_TOL:.0e}")

    n = Xa.shape[0]
    d1, K = model.theta.shape
    g = goal.grad(model)
    if g.shape != (d1 * K,):
        raise ValueError("goal gradient has the wrong length")
    b = -g / n
    b_norm = float(np.linalg.norm(b))
    diagnostics = {"goal_grad_inf_norm": float(np.max(np.abs(g))),
                   "stationarity_inf_norm": g_norm, "method": None,
                   "cg_iterations": 0, "relative_residual": 0.0}
    if b_norm == 0.0:
        v = np.zeros(d1 * K)
        diagnostics["method"] = "trivial"
        return InfluenceEngine(model, train_set, lam, goal, v, solver, diagnostics)

    P = np.exp(_log_softmax_rows(Xa @ model.theta))
    weights = np.full(n, 1.0 / n)
    lam_eff = lam + solver.damping

    def apply_H(Vm):
        from .model import _hvp_core
        return _hvp_core(Xa, P, weights, lam_eff, Vm)

    B = unvec(b, d1, K)
    if d1 * K <= _DENSE_SOLVE_CUTOFF:
        from .model import _dense_hessian_core
        H = _dense_hessian_core(Xa, P, weights, lam_eff)
        v = np.linalg.solve(H, b)
        Vm = unvec(v, d1, K)
        diagnostics["method"] = "dense"
    else:
        max_iter = solver.max_cg_iter or 10 * d1 * K
        Vm = np.zeros((d1, K))
        r = B.copy()
        p = r.copy()
        rs = float(np.sum(r * r))
        stop = (solver.residual_tol * b_norm) ** 2
        iters = 0
        while iters < max_iter and rs > stop:
            Hp = apply_H(p)
            alpha = rs / float(np.sum(p * Hp))
            Vm += alpha * p
            r -= alpha * Hp
            rs_new = float(np.sum(r * r))
            p = r + (rs_new / rs) * p
            rs = rs_new
            iters += 1
        v = vec(Vm).copy()
        diagnostics["method"] = "cg"
        diagnostics["cg_iterations"] = iters

    residual = float(np.linalg.norm(vec(apply_H(Vm)) - b)) / b_norm
    diagnostics["relative_residual"] = residual
    if residual > solver.residual_tol:
        raise SolverError(
            f"linear solve missed tolerance: relative residual {residual:.3e} "
            f"> {solver.residual_tol:.1e}")
    return InfluenceEngine(model, train_set, lam, goal, v, solver, diagnostics)


# -- module-level forms of the engine operations ----------------------------


def influence(z: LabeledSample, engine: InfluenceEngine) -> float:
    """Raw influence ``n * v . grad R(z)``; the weight-derivative of the goal."""
    return engine.influence(z)


def batch_influence(Z, engine: InfluenceEngine) -> float:
    """Mean of the members' influences (the batch weight-derivative)."""
    if len(Z) == 0:
        raise ValueError("empty batch")
    return float(np.mean([engine.influence(z) for z in Z]))


def approx_utility(x: Sample, engine: InfluenceEngine, resolver: LabelResolver,
                   hidden_label: int | None = None) -> float:
    """Approximate (influence-based) utility of one candidate."""
    return engine.approx_utility(x, resolver, hidden_label)


def approx_utilities(samples, engine: InfluenceEngine, resolver: LabelResolver,
                     hidden_labels=None) -> np.ndarray:
    """Vectorized approximate utilities over a candidate sequence."""
    return engine.approx_utilities(samples, resolver, hidden_labels)


def approx_batch_utility(X, engine: InfluenceEngine, resolver: LabelResolver,
                         hidden_labels=None) -> float:
    """Approximate utility of a batch: exactly the sum of serial utilities."""
    if len(X) == 0:
        raise ValueError("empty batch")
    total = 0.0
    for i, x in enumerate(X):
        lab = None if hidden_labels is None else hidden_labels[i]
        total += engine.approx_utility(x, resolver, lab)
    return total


def remark1_constant(engine: InfluenceEngine) -> float:
    """The constant every expectation-under-model approximate utility equals."""
    return engine.remark1_constant()


# ---------------------------------------------------------------------------
# exact retraining oracles
# ---------------------------------------------------------------------------


def labeling_index(labels, K: int) -> int:
    """Position of a joint labeling in the lexicographic K^b enumeration."""
    idx = 0
    for y in labels:
        idx = idx * K + int(y)
    return idx


def resolve_taudiffs(diffs: np.ndarray, resolver: LabelResolver,
                     p_model: np.ndarray | None = None,
                     hidden_label: int | None = None,
                     sample_id: int | None = None) -> float:
    """Resolve one candidate's per-label goal-change table to a scalar."""
    diffs = np.asarray(diffs, dtype=float)
    if resolver.kind == "oracle":
        if hidden_label is None:
            raise ValueError("oracle resolver needs the hidden label")
        return float(diffs[hidden_label])
    if resolver.kind == "min":
        return float(np.min(diffs))
    if resolver.kind == "max":
        return float(np.max(diffs))
    if p_model is None:
        raise ValueError("expectation resolver needs the model's prediction")
    p = distribution_for(resolver.dist, p_model, sample_id)
    return float(np.dot(p, diffs))


def resolve_taudiff_table(labelings: np.ndarray, diffs: np.ndarray,
                          resolver: LabelResolver,
                          P_rows: np.ndarray | None = None,
                          hidden_labels=None,
                          sample_ids=None) -> float:
    """Resolve a joint-labeling goal-change table to a scalar batch utility.

    ``labelings`` is the (K^b, b) lexicographic enumeration that produced
    ``diffs``; ``P_rows`` holds the model's per-member predictions (needed for
    expectation resolvers).
    """
    diffs = np.asarray(diffs, dtype=float)
    b = labelings.shape[1]
    K = int(np.max(labelings)) + 1
    if resolver.kind == "oracle":
        if hidden_labels is None:
            raise ValueError("oracle resolver needs hidden labels")
        return float(diffs[labeling_index(hidden_labels, K)])
    if resolver.kind == "min":
        return float(np.min(diffs))
    if resolver.kind == "max":
        return float(np.max(diffs))
    if P_rows is None:
        raise ValueError("expectation resolver needs per-member model predictions")
    W = np.array([distribution_for(resolver.dist, P_rows[j],
                                   None if sample_ids is None else sample_ids[j])
                  for j in range(b)])
    weights = np.prod(W[np.arange(b)[None, :], labelings], axis=1)
    return float(np.dot(weights, diffs))


class ExactOracle:
    """Ground-truth utilities by retraining with candidates at unit weight.

    Candidates join the training set with the same per-sample weight as the
    existing members (adding one sample at weight 1/n), matching the exact
    utility definition.  One retraining sweep per candidate (or per joint
    batch labeling) is shared across all resolvers.
    """

    def __init__(self, base_train, cfg: TrainConfig, goal: Goal,
                 base_model: ModelParams | None = None):
        self.base_train = tuple(base_train)
        self.cfg = cfg
        self.goal = goal
        X, y = stack_labeled(self.base_train)
        self._Xa = augment(X)
        self._y = y
        self.n = len(self.base_train)
        self.model = base_model if base_model is not None else train(self.base_train, cfg)
        if self.model.theta.shape[0] != self._Xa.shape[1]:
            raise ValueError("base model does not match training data")
        self.K = self.model.K
        self.tau0 = goal.value(self.model)

    def _retrain(self, X_extra: np.ndarray, y_extra: np.ndarray,
                 theta0: np.ndarray) -> np.ndarray:
        Xa = np.vstack([self._Xa, augment(X_extra)])
        y = np.concatenate([self._y, y_extra])
        w = np.full(len(y), 1.0 / self.n)
        res = fit_weighted(Xa, y, w, self.cfg.lam, self.K, theta0=theta0,
                           grad_tol=self.cfg.grad_tol, max_iter=self.cfg.max_iter)
        if not res.converged:
            raise RuntimeError(f"retraining failed to converge: grad {res.grad_inf_norm:.3e}")
        return res.theta

    # -- serial ------------------------------------------------------------

    def serial_taudiffs(self, x: Sample) -> np.ndarray:
        """Goal changes ``tau(theta_{(x,y)}) - tau(theta_hat)`` for every label y."""
        X_extra = x.features[None, :]
        out = np.empty(self.K)
        theta0 = self.model.theta
        for y in range(self.K):
            th = self._retrain(X_extra, np.array([y]), theta0)
            out[y] = self.goal.value_theta(th) - self.tau0
            theta0 = th
        return out

    def utility(self, x: Sample, resolver: LabelResolver,
                hidden_label: int | None = None) -> float:
        """Exact utility of one candidate (oracle resolver: one retraining)."""
        if resolver.kind == "oracle":
            if hidden_label is None:
                raise ValueError("oracle resolver needs the hidden label")
            th = self._retrain(x.features[None, :], np.array([hidden_label]),
                               self.model.theta)
            return float(self.goal.value_theta(th) - self.tau0)
        diffs = self.serial_taudiffs(x)
        p_model = None
        if resolver.kind == "expectation":
            p_model = np.exp(_log_softmax_rows(
                augment(x.features[None, :]) @ self.model.theta))[0]
        return resolve_taudiffs(diffs, resolver, p_model=p_model,
                                hidden_label=hidden_label, sample_id=x.id)

    # -- batch -------------------------------------------------------------

    def batch_taudiff(self, X: np.ndarray, labels) -> float:
        """Goal change after retraining with one fully-labeled batch."""
        th = self._retrain(np.atleast_2d(X), np.asarray(labels, dtype=int),
                           self.model.theta)
        return float(self.goal.value_theta(th) - self.tau0)

    def batch_table(self, X: np.ndarray):
        """Goal changes for every joint labeling of a batch.

        Returns ``(labelings, taudiffs)`` where labelings is (K^b, b).
        Retrainings chain warm starts through the enumeration order
        (lexicographic), which is deterministic.
        """
        X = np.atleast_2d(X)
        b = X.shape[0]
        count = self.K ** b
        if count > _MAX_JOINT_LABELINGS:
            raise ValueError(
                f"K^b = {count} joint labelings exceeds the {_MAX_JOINT_LABELINGS} gate")
        labelings = np.array(list(itertools.product(range(self.K), repeat=b)), dtype=int)
        diffs = np.empty(count)
        theta0 = self.model.theta
        for i, lab in enumerate(labelings):
            th = self._retrain(X, lab, theta0)
            diffs[i] = self.goal.value_theta(th) - self.tau0
            theta0 = th
        return labelings, diffs

    def batch_utility(self, X: np.ndarray, resolver: LabelResolver,
                      hidden_labels=None) -> float:
        """Exact batch utility under a resolver.

        Oracle: one retraining with the true labels.  Min/max: extremes over
        all joint labelings.  Expectation: the product-weighted mean over all
        joint labelings, with per-sample distributions from the resolver.
        """
        X = np.atleast_2d(X)
        if resolver.kind == "oracle":
            if hidden_labels is None:
                raise ValueError("oracle resolver needs hidden labels")
            return self.batch_taudiff(X, hidden_labels)
        labelings, diffs = self.batch_table(X)
        P_model = np.exp(_log_softmax_rows(augment(X) @ self.model.theta))
        return resolve_taudiff_table(labelings, diffs, resolver, P_rows=P_model,
                                     hidden_labels=hidden_labels)


def exact_utility(x: Sample, resolver: LabelResolver, base_train,
                  cfg: TrainConfig, goal: Goal,
                  hidden_label: int | None = None) -> float:
    """One-shot exact utility (trains the base model internally)."""
    return ExactOracle(base_train, cfg, goal).utility(x, resolver, hidden_label)


def exact_batch_utility(X, resolver: LabelResolver, base_train, cfg: TrainConfig,
                        goal: Goal, hidden_labels=None) -> float:
    """One-shot exact batch utility (trains the base model internally)."""
    feats = stack_features(X) if not isinstance(X, np.ndarray) else np.atleast_2d(X)
    return ExactOracle(base_train, cfg, goal).batch_utility(feats, resolver, hidden_labels)


# ---------------------------------------------------------------------------
# epsilon-weighted retraining (finite-difference support)
# ---------------------------------------------------------------------------


class EpsRetrainer:
    """Retrains with extra samples at a small (possibly negative) weight eps.

    A serial candidate enters at weight eps; a batch of b candidates enters at
    eps/b each.  Used to check influence values against central finite
    differences of the goal along the retraining path.
    """

    def __init__(self, base_train, cfg: TrainConfig, eps: float = 1e-3):
        self.base_train = tuple(base_train)
        self.cfg = cfg
        self.eps = float(eps)
        X, y = stack_labeled(self.base_train)
        self._Xa = augment(X)
        self._y = y
        self.n = len(self.base_train)
        self.model = train(self.base_train, cfg)

    def retrain(self, extra, eps: float | None = None) -> ModelParams:
        """Retrain with one LabeledSample or a list of them at total weight eps."""
        eps = self.eps if eps is None else float(eps)
        extras = [extra] if isinstance(extra, LabeledSample) else list(extra)
        if not extras:
            raise ValueError("no extra samples given")
        X_extra, y_extra = stack_labeled(extras)
        Xa = np.vstack([self._Xa, augment(X_extra)])
        y = np.concatenate([self._y, y_extra])
        w = np.concatenate([np.full(self.n, 1.0 / self.n),
                            np.full(len(extras), eps / len(extras))])
        res = fit_weighted(Xa, y, w, self.cfg.lam, self.model.K,
                           theta0=self.model.theta, grad_tol=self.cfg.grad_tol,
                           max_iter=self.cfg.max_iter)
        if not res.converged:
            raise RuntimeError(
                f"eps-retraining failed to converge: grad {res.grad_inf_norm:.3e}")
        return ModelParams(res.theta)
