"""L2-regularized multinomial logistic regression (MLR) core.

Parameterization
----------------
The model keeps a weight matrix ``theta`` of shape ``(d+1, K)``: one column per
class, one row per input coordinate plus a trailing intercept row.  Inputs are
augmented with a constant-1 feature, so the intercept is trained and
regularized exactly like every other coordinate.  The model is deliberately
over-parametrized (no reference class is pinned); the L2 term makes the
objective strictly convex anyway.

Flat parameter vectors (gradients, Hessian-vector products, solver vectors)
use column-major order, i.e. ``vec(theta) = theta.reshape(-1, order="F")``:
class 0's coordinates first, then class 1's, and so on.  Under this layout the
per-sample Hessian of the loss has the Kronecker form

    lam * I  +  (diag(p) - p p^T) (x) (xa xa^T)

with ``xa`` the augmented input, which is what the matrix-free products below
exploit.

Per-sample loss: ``R(z, theta) = (lam/2)||theta||^2 - log p_theta(y | x)``.
Training minimizes the mean of ``R`` over the training set.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import json

import numpy as np
from scipy.special import logsumexp, xlogy

from .datasets import LabeledSample, Sample

__all__ = [
    "ModelParams",
    "TrainConfig",
    "FitResult",
    "TrainingError",
    "vec",
    "unvec",
    "augment",
    "predict_proba",
    "predict_proba_matrix",
    "predict_log_proba_matrix",
    "per_sample_loss",
    "per_sample_grad",
    "hessian_vector_product",
    "dense_hessian",
    "train",
    "fit_weighted",
    "lambda_from_C",
    "cross_validate_C",
    "accuracy",
    "save_checkpoint",
    "load_checkpoint",
    "stack_features",
    "stack_labeled",
]

# Probabilities are clamped at this floor before any explicit log().
PROB_FLOOR = 1e-300
_LOG_FLOOR = np.log(PROB_FLOOR)


class TrainingError(RuntimeError):
    """Raised when the trainer fails to reach the requested gradient tolerance."""


def vec(m: np.ndarray) -> np.ndarray:
    """Column-major flattening of a parameter-shaped matrix."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape((rows, cols), order="F")


def augment(X: np.ndarray) -> np.ndarray:
    """Append the constant-1 intercept column to a feature matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([X, np.ones((X.shape[0], 1))])


def stack_features(samples) -> np.ndarray:
    """Stack raw (un-augmented) features of Sample/LabeledSample sequences."""
    rows = []
    for s in samples:
        rows.append(s.sample.features if isinstance(s, LabeledSample) else s.features)
    return np.array(rows, dtype=float)


def stack_labeled(samples) -> tuple[np.ndarray, np.ndarray]:
    """Return (features, labels) arrays for a sequence of LabeledSample."""
    X = stack_features(samples)
    y = np.array([s.label for s in samples], dtype=int)
    return X, y


@dataclass(frozen=True)
class ModelParams:
    """Trained MLR parameters: a read-only (d+1, K) weight matrix."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.array(self.theta, dtype=float)
        if th.ndim != 2 or th.shape[0] < 2 or th.shape[1] < 2:
            raise ValueError(f"theta must be (d+1, K) with d >= 1, K >= 2, got {th.shape}")
        if not np.all(np.isfinite(th)):
            raise ValueError("theta contains non-finite entries")
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)

    @property
    def d(self) -> int:
        return self.theta.shape[0] - 1

    @property
    def K(self) -> int:
        return self.theta.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    """Trainer settings.

    ``lam`` is the L2 strength of the per-sample loss.  ``grad_tol`` bounds the
    infinity norm of the mean-objective gradient at the returned parameters.
    ``n_classes`` declares K when the training labels alone may not cover all
    classes (the warm start's shape wins if both are given).
    """

    lam: float
    grad_tol: float = 1e-8
    max_iter: int = 200
    warm_start: ModelParams | None = None
    n_classes: int | None = None

    def __post_init__(self):
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise ValueError(f"lam must be a positive finite real, got {self.lam}")
        if not (self.grad_tol > 0):
            raise ValueError("grad_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class FitResult:
    """Raw trainer output: parameters plus convergence diagnostics."""

    theta: np.ndarray
    n_iter: int
    grad_inf_norm: float
    converged: bool


# ---------------------------------------------------------------------------
# probability computations
# ---------------------------------------------------------------------------


def _log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    return logits - logsumexp(logits, axis=1, keepdims=True)


def predict_log_proba_matrix(model: ModelParams, X: np.ndarray) -> np.ndarray:
    """Row-wise log class probabilities for raw (un-augmented) features."""
    Xa = augment(X)
    if Xa.shape[1] != model.theta.shape[0]:
        raise ValueError(
            f"feature dimension {Xa.shape[1] - 1} does not match model d={model.d}"
        )
    return _log_softmax_rows(Xa @ model.theta)


def predict_proba_matrix(model: ModelParams, X: np.ndarray) -> np.ndarray:
    """Row-wise class probabilities for raw (un-augmented) features."""
    return np.exp(predict_log_proba_matrix(model, X))


def predict_proba(model: ModelParams, x: Sample) -> np.ndarray:
    """Class-probability vector for a single sample."""
    return predict_proba_matrix(model, x.features[None, :])[0]


# ---------------------------------------------------------------------------
# per-sample loss / gradient, Hessian products
# ---------------------------------------------------------------------------


def per_sample_loss(z: LabeledSample, model: ModelParams, lam: float) -> float:
    """``(lam/2)||theta||^2 - log p(y | x)`` for one labeled sample."""
    logp = predict_log_proba_matrix(model, z.sample.features[None, :])[0]
    reg = 0.5 * lam * float(np.sum(model.theta**2))
    return reg - float(max(logp[z.label], _LOG_FLOOR))


def per_sample_grad(z: LabeledSample, model: ModelParams, lam: float) -> np.ndarray:
    """Flat gradient of the per-sample loss, length (d+1)*K, column-major."""
    xa = augment(z.sample.features[None, :])[0]
    p = predict_proba_matrix(model, z.sample.features[None, :])[0]
    ey = np.zeros(model.K)
    ey[z.label] = 1.0
    G = lam * model.theta - np.outer(xa, ey - p)
    return vec(G)


def _hvp_core(Xa: np.ndarray, P: np.ndarray, weights: np.ndarray, lam_total: float,
              V: np.ndarray) -> np.ndarray:
    """Weighted Hessian product in matrix form.

    Computes ``lam_total * V + sum_i w_i * Lambda_i (x) (xa_i xa_i^T)`` applied
    to ``vec(V)``, returned as a matrix, where ``Lambda_i = diag(p_i) - p_i p_i^T``.
    """
    A = Xa @ V
    B = P * A - (A * P).sum(axis=1, keepdims=True) * P
    return lam_total * V + Xa.T @ (weights[:, None] * B)


def hessian_vector_product(model: ModelParams, train_set, lam: float,
                           v: np.ndarray) -> np.ndarray:
    """Product of the mean per-sample Hessian at ``model`` with flat vector ``v``."""
    X, _ = stack_labeled(train_set)
    Xa = augment(X)
    if Xa.shape[1] != model.theta.shape[0]:
        raise ValueError("training features do not match model dimension")
    v = np.asarray(v, dtype=float)
    if v.shape != (model.theta.size,):
        raise ValueError(f"v must have length {model.theta.size}, got {v.shape}")
    P = np.exp(_log_softmax_rows(Xa @ model.theta))
    n = Xa.shape[0]
    V = unvec(v, model.theta.shape[0], model.K)
    H_V = _hvp_core(Xa, P, np.full(n, 1.0 / n), lam, V)
    return vec(H_V)


def _dense_hessian_core(Xa: np.ndarray, P: np.ndarray, weights: np.ndarray,
                        lam_total: float) -> np.ndarray:
    """Explicit weighted Hessian, ((d+1)K, (d+1)K), column-major block layout."""
    d1 = Xa.shape[1]
    K = P.shape[1]
    H = np.zeros((d1 * K, d1 * K))
    for j in range(K):
        for k in range(j, K):
            coef = weights * (P[:, j] * ((1.0 if j == k else 0.0) - P[:, k]))
            block = Xa.T @ (coef[:, None] * Xa)
            H[j * d1:(j + 1) * d1, k * d1:(k + 1) * d1] = block
            if k != j:
                H[k * d1:(k + 1) * d1, j * d1:(j + 1) * d1] = block.T
    H[np.diag_indices_from(H)] += lam_total
    return H


def dense_hessian(model: ModelParams, train_set, lam: float) -> np.ndarray:
    """Explicitly assembled mean per-sample Hessian (small instances only)."""
    X, _ = stack_labeled(train_set)
    Xa = augment(X)
    if model.theta.size > 4096:
        raise ValueError("dense_hessian is limited to (d+1)*K <= 4096")
    P = np.exp(_log_softmax_rows(Xa @ model.theta))
    n = Xa.shape[0]
    return _dense_hessian_core(Xa, P, np.full(n, 1.0 / n), lam)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

# Below this flat dimension the Newton step is solved densely; above it, by
# conjugate gradients on the matrix-free Hessian product.
_DENSE_NEWTON_CUTOFF = 300


def _objective(Xa, y_idx, logits, theta, weights, lam, w_total):
    logp = _log_softmax_rows(logits)
    nll = -float(np.dot(weights, logp[np.arange(Xa.shape[0]), y_idx]))
    return 0.5 * lam * w_total * float(np.sum(theta * theta)) + nll


def _cg_matrix(apply_H, G, tol, max_iter):
    """Conjugate gradients for H s = -G in matrix space (Frobenius products)."""
    S = np.zeros_like(G)
    r = -G.copy()
    p = r.copy()
    rs = float(np.sum(r * r))
    b_norm = np.sqrt(rs)
    if b_norm == 0.0:
        return S
    stop = (tol * b_norm) ** 2
    for _ in range(max_iter):
        Hp = apply_H(p)
        alpha = rs / float(np.sum(p * Hp))
        S += alpha * p
        r -= alpha * Hp
        rs_new = float(np.sum(r * r))
        if rs_new <= stop:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return S


def fit_weighted(Xa: np.ndarray, y_idx: np.ndarray, weights: np.ndarray, lam: float,
                 K: int, theta0: np.ndarray | None = None, grad_tol: float = 1e-8,
                 max_iter: int = 200) -> FitResult:
    """Damped Newton minimization of ``sum_i w_i R(z_i, theta)``.

    Each per-sample loss carries its own L2 term, so the total regularizer
    weight is ``lam * sum(weights)``.  Deterministic: no randomness anywhere.
    """
    n, d1 = Xa.shape
    w_total = float(np.sum(weights))
    theta = np.zeros((d1, K)) if theta0 is None else np.array(theta0, dtype=float)
    Y = np.zeros((n, K))
    Y[np.arange(n), y_idx] = 1.0
    dense = d1 * K <= _DENSE_NEWTON_CUTOFF

    logits = Xa @ theta
    f = _objective(Xa, y_idx, logits, theta, weights, lam, w_total)
    for it in range(max_iter):
        P = np.exp(_log_softmax_rows(logits))
        G = lam * w_total * theta + Xa.T @ (weights[:, None] * (P - Y))
        g_norm = float(np.max(np.abs(G)))
        if g_norm < grad_tol:
            return FitResult(theta, it, g_norm, True)
        if dense:
            H = _dense_hessian_core(Xa, P, weights, lam * w_total)
            S = unvec(np.linalg.solve(H, -vec(G)), d1, K)
        else:
            S = _cg_matrix(lambda V: _hvp_core(Xa, P, weights, lam * w_total, V),
                           G, tol=1e-10, max_iter=10 * d1 * K)
        # Armijo backtracking on the Newton direction.
        slope = float(np.sum(G * S))
        t = 1.0
        while True:
            theta_new = theta + t * S
            logits_new = Xa @ theta_new
            f_new = _objective(Xa, y_idx, logits_new, theta_new, weights, lam, w_total)
            if f_new <= f + 1e-4 * t * slope or t < 1e-14:
                break
            t *= 0.5
        if t < 1e-14:
            raise TrainingError(
                f"line search stalled at iteration {it}, gradient norm {g_norm:.3e}")
        theta, logits, f = theta_new, logits_new, f_new

    P = np.exp(_log_softmax_rows(logits))
    G = lam * w_total * theta + Xa.T @ (weights[:, None] * (P - Y))
    g_norm = float(np.max(np.abs(G)))
    if g_norm < grad_tol:
        return FitResult(theta, max_iter, g_norm, True)
    return FitResult(theta, max_iter, g_norm, False)


def _resolve_K(y_idx: np.ndarray, cfg: TrainConfig) -> int:
    observed = int(np.max(y_idx)) + 1 if y_idx.size else 0
    if cfg.warm_start is not None:
        K = cfg.warm_start.K
    elif cfg.n_classes is not None:
        K = cfg.n_classes
    else:
        K = observed
        if len(np.unique(y_idx)) < 2:
            raise ValueError("training set has < 2 distinct classes and no K declared")
    if observed > K:
        raise ValueError(f"label {observed - 1} out of range for K={K}")
    return K


def train(train_set, cfg: TrainConfig) -> ModelParams:
    """Train MLR on a labeled set, minimizing the mean per-sample loss.

    Raises :class:`TrainingError` (with the final gradient norm) when the
    gradient tolerance is not reached within ``cfg.max_iter`` Newton steps.
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    X, y = stack_labeled(train_set)
    if not np.all(np.isfinite(X)):
        raise ValueError("training features contain non-finite values")
    Xa = augment(X)
    K = _resolve_K(y, cfg)
    theta0 = None
    if cfg.warm_start is not None:
        if cfg.warm_start.theta.shape != (Xa.shape[1], K):
            raise ValueError("warm start shape does not match data dimensions")
        theta0 = cfg.warm_start.theta
    n = Xa.shape[0]
    res = fit_weighted(Xa, y, np.full(n, 1.0 / n), cfg.lam, K, theta0=theta0,
                       grad_tol=cfg.grad_tol, max_iter=cfg.max_iter)
    if not res.converged:
        raise TrainingError(
            f"no convergence in {cfg.max_iter} iterations; "
            f"final gradient inf-norm {res.grad_inf_norm:.3e} (tol {cfg.grad_tol:.1e})")
    return ModelParams(res.theta)


# ---------------------------------------------------------------------------
# regularization mapping, cross-validation, evaluation
# ---------------------------------------------------------------------------


def lambda_from_C(C: float, n: int) -> float:
    """Map the dataset-level constant C to the per-sample L2 strength 1/(n*C)."""
    if not (C > 0 and np.isfinite(C)):
        raise ValueError(f"C must be positive and finite, got {C}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 1.0 / (n * C)


def cross_validate_C(data, grid, folds: int = 5, seed: int = 0,
                     grad_tol: float = 1e-8) -> float:
    """Pick C from ``grid`` by k-fold mean held-out log-likelihood.

    Ties resolve to the smaller C.  Fold assignment is a seeded permutation cut
    into ``folds`` contiguous chunks; K is inferred from the full data so every
    fold trains with the same class count.
    """
    grid = sorted(set(float(c) for c in grid))
    if not grid:
        raise ValueError("empty C grid")
    n = len(data)
    if folds < 2 or folds > n:
        raise ValueError(f"folds must be in [2, {n}]")
    X, y = stack_labeled(data)
    K = int(np.max(y)) + 1
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.linspace(0, n, folds + 1).astype(int)
    best_C, best_score = None, -np.inf
    for C in grid:
        fold_means = []
        for f in range(folds):
            held = perm[bounds[f]:bounds[f + 1]]
            rest = np.concatenate([perm[:bounds[f]], perm[bounds[f + 1]:]])
            cfg = TrainConfig(lam=lambda_from_C(C, len(rest)), grad_tol=grad_tol,
                              n_classes=K)
            mdl = train([data[i] for i in rest], cfg)
            logp = predict_log_proba_matrix(mdl, X[held])
            logp = np.maximum(logp, _LOG_FLOOR)
            fold_means.append(float(np.mean(logp[np.arange(len(held)), y[held]])))
        score = float(np.mean(fold_means))
        if score > best_score:
            best_C, best_score = C, score
    return best_C


def accuracy(model: ModelParams, test_set) -> float:
    """Mean 0/1 accuracy of argmax predictions; argmax ties go to the smaller class."""
    if len(test_set) == 0:
        raise ValueError("empty test set")
    X, y = stack_labeled(test_set)
    pred = np.argmax(predict_proba_matrix(model, X), axis=1)
    return float(np.mean(pred == y))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: ModelParams, lam: float, path) -> None:
    """Write a text checkpoint: one JSON header line, then d+1 rows of K weights.

    Numbers use 17 significant digits, so a load/save round trip is exact.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"d": model.d, "K": model.K, "lambda": lam}) + "\n")
        for row in model.theta:
            fh.write(" ".join(f"{w:.17g}" for w in row) + "\n")


def load_checkpoint(path) -> tuple[ModelParams, float]:
    """Inverse of :func:`save_checkpoint`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        rows = [[float(tok) for tok in line.split()] for line in fh if line.strip()]
    theta = np.array(rows, dtype=float)
    if theta.shape != (header["d"] + 1, header["K"]):
        raise ValueError(
            f"checkpoint body {theta.shape} does not match header "
            f"(d={header['d']}, K={header['K']})")
    return ModelParams(theta), float(header["lambda"])


def retrain_config(cfg: TrainConfig, lam: float, warm: ModelParams | None,
                   n_classes: int | None = None) -> TrainConfig:
    """Convenience: a copy of ``cfg`` with new lam / warm start."""
    return replace(cfg, lam=lam, warm_start=warm,
                   n_classes=n_classes if n_classes is not None else cfg.n_classes)
