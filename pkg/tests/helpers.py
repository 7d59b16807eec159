"""Independent oracles shared across the test suite.

Everything here deliberately takes a different route than the package code
it checks: extended-precision softmax instead of shifted log-sum-exp, dense
Kronecker assembly instead of matrix-free products, an off-the-shelf
quasi-Newton optimizer instead of the package trainer, brute-force subset
enumeration instead of top-b selection, and central finite differences
instead of analytic gradients.  Agreement between the two routes is the
evidence the tests rely on.
"""

from __future__ import annotations

import itertools

import mpmath
import numpy as np
from scipy import optimize, stats

from goralab.datasets import LabeledSample, Sample, generate_class_blobs
from goralab.model import ModelParams, TrainConfig, train

mpmath.mp.dps = 60  # ~1e-60 working precision for the softmax oracle


# ---------------------------------------------------------------------------
# scalar utilities
# ---------------------------------------------------------------------------

def rel_err(got, want) -> float:
    """|got - want| / max(|want|, tiny), elementwise max for arrays."""
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    denom = np.maximum(np.abs(want), 1e-300)
    return float(np.max(np.abs(got - want) / denom))


def vector_rel_err(got, want) -> float:
    """Relative error in the Euclidean norm (for gradient comparisons)."""
    got = np.asarray(got, dtype=float).ravel()
    want = np.asarray(want, dtype=float).ravel()
    denom = max(np.linalg.norm(want), 1e-300)
    return float(np.linalg.norm(got - want) / denom)


def spearman(a, b) -> float:
    return float(stats.spearmanr(a, b).statistic)


def pearson(a, b) -> float:
    return float(stats.pearsonr(a, b).statistic)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def central_fd_grad(f, theta: np.ndarray, step: float) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a vector."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        g[i] = (f(theta + e) - f(theta - e)) / (2.0 * step)
    return g


def central_fd_directional(f, theta: np.ndarray, v: np.ndarray, step: float) -> float:
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    return (f(theta + step * v) - f(theta - step * v)) / (2.0 * step)


# ---------------------------------------------------------------------------
# extended-precision softmax / loss oracle (mpmath)
# ---------------------------------------------------------------------------

def mp_probs(theta_mat: np.ndarray, x_aug: np.ndarray) -> np.ndarray:
    """Class probabilities for one augmented sample, computed at 60 digits."""
    logits = [mpmath.mpf(0) for _ in range(theta_mat.shape[1])]
    for k in range(theta_mat.shape[1]):
        s = mpmath.mpf(0)
        for j in range(theta_mat.shape[0]):
            s += mpmath.mpf(float(x_aug[j])) * mpmath.mpf(float(theta_mat[j, k]))
        logits[k] = s
    exps = [mpmath.e ** z for z in logits]
    total = mpmath.fsum(exps)
    return np.array([float(e / total) for e in exps])


def mp_log_prob(theta_mat: np.ndarray, x_aug: np.ndarray, y: int) -> float:
    """log p(y|x) at 60 digits (no floating shift tricks)."""
    logits = []
    for k in range(theta_mat.shape[1]):
        s = mpmath.mpf(0)
        for j in range(theta_mat.shape[0]):
            s += mpmath.mpf(float(x_aug[j])) * mpmath.mpf(float(theta_mat[j, k]))
        logits.append(s)
    total = mpmath.fsum(mpmath.e ** z for z in logits)
    return float(logits[y] - mpmath.log(total))


# ---------------------------------------------------------------------------
# naive objective + off-the-shelf optimizer oracle
# ---------------------------------------------------------------------------

def naive_objective(theta_vec: np.ndarray, Xa: np.ndarray, y: np.ndarray,
                    lam: float, K: int) -> float:
    """Mean NLL + (lam/2)||theta||^2 via numpy.logaddexp (independent algebra)."""
    d1 = Xa.shape[1]
    theta = np.asarray(theta_vec, dtype=float).reshape(d1, K, order="F")
    logits = Xa @ theta
    lse = np.logaddexp.reduce(logits, axis=1)
    nll = lse - logits[np.arange(len(y)), y]
    return float(np.mean(nll) + 0.5 * lam * np.dot(theta_vec, theta_vec))


def naive_objective_grad(theta_vec: np.ndarray, Xa: np.ndarray, y: np.ndarray,
                         lam: float, K: int) -> np.ndarray:
    d1 = Xa.shape[1]
    theta = np.asarray(theta_vec, dtype=float).reshape(d1, K, order="F")
    logits = Xa @ theta
    logits -= logits.max(axis=1, keepdims=True)
    P = np.exp(logits)
    P /= P.sum(axis=1, keepdims=True)
    Y = np.zeros_like(P)
    Y[np.arange(len(y)), y] = 1.0
    G = Xa.T @ (P - Y) / len(y)
    return G.reshape(-1, order="F") + lam * theta_vec


def lbfgs_fit(Xa: np.ndarray, y: np.ndarray, lam: float, K: int,
              theta0: np.ndarray | None = None) -> np.ndarray:
    """Independent optimizer for the training objective (scipy L-BFGS-B)."""
    d1 = Xa.shape[1]
    x0 = np.zeros(d1 * K) if theta0 is None else np.asarray(theta0, float).ravel()
    res = optimize.minimize(
        naive_objective, x0, args=(Xa, y, lam, K), jac=naive_objective_grad,
        method="L-BFGS-B", options={"maxiter": 2000, "ftol": 1e-16, "gtol": 1e-10})
    return res.x


# ---------------------------------------------------------------------------
# dense Hessian oracle (Kronecker assembly)
# ---------------------------------------------------------------------------

def kron_hessian(model: ModelParams, train_set, lam: float) -> np.ndarray:
    """H = lam*I + (1/n) sum_i kron(Lambda_i, x_i x_i^T), assembled densely.

    Lambda = diag(p) - p p^T; the Kronecker order matches the column-major
    vec layout (class-major blocks of size d+1).
    """
    d1 = model.theta.shape[0]
    K = model.theta.shape[1]
    H = lam * np.eye(d1 * K)
    n = len(train_set)
    for z in train_set:
        xa = np.append(np.asarray(z.sample.features, dtype=float), 1.0)
        p = mp_probs(model.theta, xa)
        Lam = np.diag(p) - np.outer(p, p)
        H += np.kron(Lam, np.outer(xa, xa)) / n
    return H


def kron_fisher_conditional(model: ModelParams, x) -> np.ndarray:
    """Lambda(x) kron x~ x~^T for a single (unlabeled) sample."""
    xa = np.append(np.asarray(x.features, dtype=float), 1.0)
    p = mp_probs(model.theta, xa)
    Lam = np.diag(p) - np.outer(p, p)
    return np.kron(Lam, np.outer(xa, xa))


# ---------------------------------------------------------------------------
# brute-force subset selection oracle
# ---------------------------------------------------------------------------

def best_subset_by_sum(utilities, b: int) -> list:
    """argmax over all C(n, b) subsets of the summed utility, ties by
    lexicographically smallest index tuple; returns a sorted list."""
    utilities = np.asarray(utilities, dtype=float)
    best = None
    best_val = -np.inf
    for combo in itertools.combinations(range(utilities.size), b):
        val = float(utilities[list(combo)].sum())
        if val > best_val + 1e-12:
            best, best_val = combo, val
    return sorted(best)


# ---------------------------------------------------------------------------
# fixture builders
# ---------------------------------------------------------------------------

def random_labeled(n: int, d: int, K: int, seed: int = 0) -> list:
    """i.i.d. normal features with uniform random labels (no structure)."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, K, size=n)
    return [LabeledSample(Sample(X[i], id=i), int(y[i])) for i in range(n)]


def random_theta(d: int, K: int, seed: int = 0, scale: float = 0.5) -> ModelParams:
    rng = np.random.default_rng(seed)
    return ModelParams(rng.normal(scale=scale, size=(d + 1, K)))


def blob_train_pool(n: int, d: int, K: int, seed: int, noise: float,
                    n_train: int, n_pool: int, perm_seed: int | None = None):
    """Shared construction for study instances: blobs, then a seeded
    permutation into (train, pool, hidden labels) — same recipe as the
    harness's approx-quality studies."""
    data = generate_class_blobs(n, d, K, seed=seed, noise=noise)
    rng = np.random.default_rng(seed if perm_seed is None else perm_seed)
    perm = rng.permutation(len(data))
    train_set = [data[i] for i in perm[:n_train]]
    pool = [data[i].sample for i in perm[n_train:n_train + n_pool]]
    hidden = [data[i].label for i in perm[n_train:n_train + n_pool]]
    return train_set, pool, hidden


def trained(train_set, lam: float, K: int | None = None) -> ModelParams:
    cfg = TrainConfig(lam=lam, n_classes=K)
    return train(train_set, cfg)
