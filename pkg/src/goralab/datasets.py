"""Data containers, loaders, splitters and synthetic generators.

File formats
------------
``libsvm``: one sample per line, ``<label> <index>:<value> ...`` with 1-based,
strictly increasing feature indices.  The feature dimension is the largest
index seen in the file; absent indices are zeros.

``csv``: a header row naming feature columns followed by a final ``label``
column; every other row is one sample.

Raw labels from either format are remapped to contiguous 0-based integers by
sorted order (numeric when all labels parse as numbers, else lexicographic);
the remap table is recorded on the returned :class:`Dataset`.
"""

from __future__ import annotations

import csv as _csv
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Sample",
    "LabeledSample",
    "ALInstance",
    "Dataset",
    "DatasetError",
    "load_dataset",
    "split_al_instance",
    "sample_dev_set",
    "generate_synth2",
    "synth2_cluster_tag",
    "SYNTH2_CLUSTERS",
    "SYNTH2_SIGMA",
    "generate_class_blobs",
    "write_libsvm",
]


class DatasetError(ValueError):
    """Raised for malformed data files or invalid split requests."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Sample:
    """An unlabeled point: a finite feature vector plus a stable integer id."""

    features: np.ndarray
    id: int

    def __post_init__(self):
        f = _readonly(self.features)
        if f.ndim != 1 or f.size == 0:
            raise DatasetError(f"features must be a non-empty vector, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise DatasetError(f"sample {self.id}: non-finite feature value")
        object.__setattr__(self, "features", f)


@dataclass(frozen=True)
class LabeledSample:
    """A sample paired with a 0-based class label."""

    sample: Sample
    label: int

    def __post_init__(self):
        if self.label < 0:
            raise DatasetError(f"label must be >= 0, got {self.label}")


class Dataset(list):
    """A list of LabeledSample that records the label remap table and dimensions."""

    def __init__(self, items=(), label_map=None, d=None):
        super().__init__(items)
        self.label_map = dict(label_map or {})
        self.d = d if d is not None else (len(self[0].sample.features) if self else 0)
        # max-label+1 dominates len(label_map) when 0-based labels are kept
        # verbatim and some classes below the max are absent from the file.
        self.K = max((max(s.label for s in self) + 1) if self else 0,
                     len(self.label_map))


@dataclass(frozen=True)
class ALInstance:
    """A frozen active-learning problem.

    ``pool`` holds the queryable unlabeled samples whose true labels sit in
    ``hidden_pool_labels`` (revealed only when queried).  ``dev`` is an
    optional labeled goal set drawn from the pool *without removal*: dev
    members stay queryable, so pool/init/test are pairwise disjoint by id but
    dev ids intentionally overlap pool ids.
    """

    pool: tuple
    hidden_pool_labels: tuple
    init: tuple
    test: tuple
    K: int
    d: int
    dev: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "pool", tuple(self.pool))
        object.__setattr__(self, "hidden_pool_labels", tuple(self.hidden_pool_labels))
        object.__setattr__(self, "init", tuple(self.init))
        object.__setattr__(self, "test", tuple(self.test))
        if self.dev is not None:
            object.__setattr__(self, "dev", tuple(self.dev))
        if len(self.pool) != len(self.hidden_pool_labels):
            raise DatasetError("pool and hidden_pool_labels lengths differ")
        if not self.pool or not self.init or not self.test:
            raise DatasetError("pool, init and test must all be non-empty")
        if self.K < 2:
            raise DatasetError("need at least 2 classes")
        init_classes = {z.label for z in self.init}
        if len(init_classes) < 2:
            raise DatasetError("init set must contain >= 2 distinct classes")
        all_labels = (list(self.hidden_pool_labels)
                      + [z.label for z in self.init] + [z.label for z in self.test])
        if min(all_labels) < 0 or max(all_labels) >= self.K:
            raise DatasetError(f"labels must lie in [0, {self.K})")
        pool_ids = {s.id for s in self.pool}
        init_ids = {z.sample.id for z in self.init}
        test_ids = {z.sample.id for z in self.test}
        if len(pool_ids) != len(self.pool) or len(init_ids) != len(self.init) \
                or len(test_ids) != len(self.test):
            raise DatasetError("duplicate ids within a split")
        if pool_ids & init_ids or pool_ids & test_ids or init_ids & test_ids:
            raise DatasetError("pool, init and test must be disjoint by id")
        for s in self.pool:
            if s.features.shape != (self.d,):
                raise DatasetError(f"sample {s.id}: expected d={self.d} features")
        if self.dev is not None:
            dev_ids = {z.sample.id for z in self.dev}
            if not dev_ids <= pool_ids:
                raise DatasetError("dev samples must be drawn from the pool")


# ---------------------------------------------------------------------------
# loaders
# ---------------------------------------------------------------------------


def _remap_labels(raw_labels, keep_nonneg_ints: bool = False):
    """Map raw label tokens to 0-based contiguous ints; return (labels, table).

    With ``keep_nonneg_ints`` (the CSV convention, where files are written
    0-based in the first place), labels that already are nonnegative integers
    are kept verbatim and the table is the identity on the observed values.
    Everything else — libsvm's 1-based or ±1 labels, string classes — gets the
    sorted-unique remap.
    """
    keys = set(raw_labels)
    if keep_nonneg_ints:
        try:
            as_int = {k: int(k) for k in keys}
        except ValueError:
            as_int = None
        else:
            if any(v < 0 or str(v) != str(k).strip() for k, v in as_int.items()):
                as_int = None
        if as_int is not None:
            return [as_int[r] for r in raw_labels], dict(sorted(as_int.items(),
                                                                key=lambda kv: kv[1]))
    try:
        ordered = sorted(keys, key=float)
    except ValueError:
        ordered = sorted(str(k) for k in keys)
    table = {k: i for i, k in enumerate(ordered)}
    return [table[r] for r in raw_labels], table


def _parse_libsvm(path):
    rows, raw_labels = [], []
    d = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            raw_labels.append(toks[0])
            entries = []
            prev = 0
            for tok in toks[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise DatasetError(f"{path}: line {lineno}: bad entry {tok!r}") from None
                if idx < 1 or idx <= prev:
                    raise DatasetError(
                        f"{path}: line {lineno}: indices must be 1-based and increasing")
                if not np.isfinite(val):
                    raise DatasetError(f"{path}: line {lineno}: non-finite value")
                entries.append((idx, val))
                prev = idx
                d = max(d, idx)
            rows.append(entries)
    if not rows:
        raise DatasetError(f"{path}: no samples found")
    X = np.zeros((len(rows), d))
    for i, entries in enumerate(rows):
        for idx, val in entries:
            X[i, idx - 1] = val
    return X, raw_labels


def _parse_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if not header or header[-1].strip() != "label":
            raise DatasetError(f"{path}: last header column must be 'label'")
        d = len(header) - 1
        if d < 1:
            raise DatasetError(f"{path}: no feature columns")
        feats, raw_labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise DatasetError(f"{path}: line {lineno}: expected {d + 1} columns")
            try:
                vals = [float(v) for v in row[:-1]]
            except ValueError:
                raise DatasetError(f"{path}: line {lineno}: non-numeric feature") from None
            if not all(np.isfinite(v) for v in vals):
                raise DatasetError(f"{path}: line {lineno}: non-finite feature")
            feats.append(vals)
            raw_labels.append(row[-1].strip())
    if not feats:
        raise DatasetError(f"{path}: no samples found")
    return np.array(feats), raw_labels


def load_dataset(path, fmt: str = "libsvm") -> Dataset:
    """Load a labeled dataset from ``path`` in ``libsvm`` or ``csv`` format."""
    if fmt == "libsvm":
        X, raw = _parse_libsvm(path)
        labels, table = _remap_labels(raw)
    elif fmt == "csv":
        X, raw = _parse_csv(path)
        labels, table = _remap_labels(raw, keep_nonneg_ints=True)
    else:
        raise DatasetError(f"unknown format {fmt!r} (expected 'libsvm' or 'csv')")
    items = [LabeledSample(Sample(X[i], i), labels[i]) for i in range(len(labels))]
    return Dataset(items, label_map=table, d=X.shape[1])


def write_libsvm(data, path, one_based_labels: bool = True) -> None:
    """Write labeled samples as a libsvm-format text file (all coordinates kept)."""
    with open(path, "w", encoding="utf-8") as fh:
        for z in data:
            lab = z.label + 1 if one_based_labels else z.label
            cols = " ".join(f"{j + 1}:{v:.17g}" for j, v in enumerate(z.sample.features))
            fh.write(f"{lab} {cols}\n")


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def split_al_instance(data, n_init: int, n_test: int, seed: int = 0,
                      stratify_init: bool = True) -> ALInstance:
    """Split a labeled dataset into pool / init / test.

    A seeded permutation takes the test set first; the init set then comes from
    the remainder (with one guaranteed sample per class when
    ``stratify_init``); everything left becomes the pool with hidden labels.
    Sample ids are positions in ``data``, so the three parts are disjoint.
    """
    N = len(data)
    K = max(z.label for z in data) + 1
    if n_init < 1 or n_test < 1 or n_init + n_test >= N:
        raise DatasetError(f"invalid sizes: n_init={n_init}, n_test={n_test}, N={N}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(N)
    test_idx = list(perm[:n_test])
    rest = list(perm[n_test:])
    if stratify_init:
        if n_init < K:
            raise DatasetError(f"stratified init needs n_init >= K ({K})")
        chosen, used = [], set()
        for k in range(K):
            hit = next((i for i in rest if data[i].label == k), None)
            if hit is None:
                raise DatasetError(f"class {k} missing from init candidates")
            chosen.append(hit)
            used.add(hit)
        for i in rest:
            if len(chosen) == n_init:
                break
            if i not in used:
                chosen.append(i)
                used.add(i)
        init_idx = chosen
    else:
        init_idx = rest[:n_init]
    init_set = set(init_idx)
    pool_idx = [i for i in rest if i not in init_set]

    def as_sample(i):
        return Sample(data[i].sample.features, int(i))

    return ALInstance(
        pool=tuple(as_sample(i) for i in pool_idx),
        hidden_pool_labels=tuple(int(data[i].label) for i in pool_idx),
        init=tuple(LabeledSample(as_sample(i), data[i].label) for i in init_idx),
        test=tuple(LabeledSample(as_sample(i), data[i].label) for i in test_idx),
        K=K,
        d=len(data[0].sample.features),
    )


def sample_dev_set(instance: ALInstance, fraction: float, seed: int = 0) -> ALInstance:
    """Attach a dev set: a seeded pool subsample with labels revealed.

    The chosen samples are *not* removed from the pool.  The dev size is
    ``round(fraction * |pool|)``; a fraction rounding to zero is an error.
    """
    if not (0 < fraction <= 1):
        raise DatasetError(f"fraction must be in (0, 1], got {fraction}")
    count = int(round(fraction * len(instance.pool)))
    if count < 1:
        raise DatasetError(f"dev fraction {fraction} rounds to zero samples")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(instance.pool), size=count, replace=False)
    dev = tuple(LabeledSample(instance.pool[i], instance.hidden_pool_labels[i])
                for i in sorted(idx))
    return replace(instance, dev=dev)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

# Six isotropic Gaussian clusters in three groups.  The central pair is
# offset mostly vertically, so a model fit on central samples alone divides
# along x2 (a near-horizontal boundary).  That init boundary misclassifies
# both definitive clusters, whose labels oppose their vertical position: the
# optimal boundary is a steep diagonal threading between the central and
# definitive pairs, and fixing it requires definitive labels.  The distracting
# clusters sit in the upper-left / lower-right corners at the largest distance
# from that optimal boundary; they are correctly predicted from the start, so
# querying them never helps, yet their sheer leverage makes them attractive to
# label-agnostic resolvers (min's first picks land there).
SYNTH2_SIGMA = 0.33
SYNTH2_CLUSTERS = (
    ("central", 1, (0.6, 3.8)),
    ("central", 0, (-0.6, -3.8)),
    ("definitive", 0, (4.0, 7.0)),
    ("definitive", 1, (-4.0, -7.0)),
    ("distracting", 1, (-8.0, 16.0)),
    ("distracting", 0, (8.0, -16.0)),
)
_SYNTH2_POOL_COUNTS = {"central": 88, "definitive": 89, "distracting": 88}
_SYNTH2_TEST_PER_CLUSTER = 10
_SYNTH2_INIT_PER_CENTRAL = 5


def synth2_cluster_tag(xy) -> str:
    """Group tag ('central' / 'definitive' / 'distracting') of the nearest center."""
    xy = np.asarray(xy, dtype=float)
    dists = [np.sum((xy - np.array(c)) ** 2) for _, _, c in SYNTH2_CLUSTERS]
    return SYNTH2_CLUSTERS[int(np.argmin(dists))][0]


def generate_synth2(seed: int = 0) -> ALInstance:
    """The adversarial 2-D binary instance: 530 pool / 10 init / 60 test.

    Init samples come only from the two central clusters (resampled until each
    lies nearest a central center), class balance is exact by construction, and
    ids are globally unique: pool 0..529, init 530..539, test 540..599.
    """
    rng = np.random.default_rng(seed)

    def draw(center, count):
        return rng.normal(loc=center, scale=SYNTH2_SIGMA, size=(count, 2))

    pool_pts, pool_labels = [], []
    test_pts, test_labels = [], []
    init_pts, init_labels = [], []
    for group, label, center in SYNTH2_CLUSTERS:
        pts = draw(center, _SYNTH2_POOL_COUNTS[group])
        pool_pts.append(pts)
        pool_labels.extend([label] * len(pts))
        tst = draw(center, _SYNTH2_TEST_PER_CLUSTER)
        test_pts.append(tst)
        test_labels.extend([label] * len(tst))
        if group == "central":
            got = []
            while len(got) < _SYNTH2_INIT_PER_CENTRAL:
                cand = draw(center, 1)[0]
                if synth2_cluster_tag(cand) == "central":
                    got.append(cand)
            init_pts.extend(got)
            init_labels.extend([label] * _SYNTH2_INIT_PER_CENTRAL)
    pool_X = np.vstack(pool_pts)
    test_X = np.vstack(test_pts)
    init_X = np.array(init_pts)

    n_pool = len(pool_X)
    pool = tuple(Sample(pool_X[i], i) for i in range(n_pool))
    init = tuple(LabeledSample(Sample(init_X[i], n_pool + i), init_labels[i])
                 for i in range(len(init_X)))
    test = tuple(LabeledSample(Sample(test_X[i], n_pool + len(init_X) + i), test_labels[i])
                 for i in range(len(test_X)))
    return ALInstance(pool=pool, hidden_pool_labels=tuple(pool_labels),
                      init=init, test=test, K=2, d=2)


def generate_class_blobs(n: int, d: int, K: int, seed: int = 0,
                         center_spread: float = 1.0, noise: float = 0.35) -> Dataset:
    """Gaussian class blobs: a generic stand-in source for benchmark-shaped data.

    Class centers are drawn once from N(0, center_spread^2)^d; samples are the
    centers plus isotropic noise, in a fixed class-round-robin order so any
    prefix is near-balanced.
    """
    if K < 2 or d < 1 or n < 2 * K:
        raise DatasetError(f"need K >= 2, d >= 1, n >= 2K; got n={n}, d={d}, K={K}")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_spread, size=(K, d))
    labels = np.arange(n) % K
    X = centers[labels] + rng.normal(0.0, noise, size=(n, d))
    items = [LabeledSample(Sample(X[i], i), int(labels[i])) for i in range(n)]
    return Dataset(items, label_map={k: k for k in range(K)}, d=d)
