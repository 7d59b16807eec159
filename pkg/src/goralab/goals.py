"""Scalar goal functionals of the model parameters.

Three goals are provided, each with an exact gradient (no L2 term -- goals
have no regularizer):

* dev-set log-likelihood      ``sum_{(x,y) in dev} log p_theta(y | x)``
* negative prediction entropy ``- sum_{x in U} H(p_theta(x))``
* negative mean Fisher trace  ``- (1/|U|) sum_{x in U} tr H(theta; x)``

where ``H(theta; x) = lam*I + (diag(p) - p p^T) (x) (xa xa^T)`` is the
per-sample loss Hessian, so its trace has the closed form
``lam*(d+1)*K + (1 - p^T p) * xa^T xa`` with ``xa`` the augmented input.
The identity-trace term uses the full trained dimensionality (d+1)*K; the
intercept-free count lam*K is exposed alongside it in
:func:`fir_trace_constants` for debugging, the two differing only by a
selection-irrelevant constant.

Goal context sets (dev or U) are fixed at construction and never resampled;
goal objects pre-stack their context matrices once, so repeated evaluation
during retraining sweeps costs one matrix product.  Gradients are returned
flat (length (d+1)*K, column-major) to match the model's vector convention.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.special import xlogy

from .datasets import Sample
from .model import (ModelParams, _LOG_FLOOR, _log_softmax_rows, augment,
                    predict_log_proba_matrix, stack_features, stack_labeled, vec)

__all__ = [
    "Goal",
    "DevLossGoal",
    "EntropyGoal",
    "FisherTraceGoal",
    "make_goal",
    "tau_dev",
    "grad_tau_dev",
    "tau_ent",
    "grad_tau_ent",
    "tau_fir",
    "grad_tau_fir",
    "fir_trace_constants",
    "fisher_conditional",
    "GOAL_KINDS",
]

logger = logging.getLogger(__name__)

GOAL_KINDS = ("dev", "ent", "fir")


# ---------------------------------------------------------------------------
# goal objects (cached contexts; the free functions below delegate to them)
# ---------------------------------------------------------------------------


class Goal:
    """A scalar functional with a flat gradient; context fixed at construction.

    ``value_theta`` / ``grad_theta`` operate on a raw (d+1, K) matrix and are
    the hot-path entry points for retraining sweeps.
    """

    kind: str

    def value_theta(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def grad_theta(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, model: ModelParams) -> float:
        return self.value_theta(model.theta)

    def grad(self, model: ModelParams) -> np.ndarray:
        return self.grad_theta(model.theta)


class DevLossGoal(Goal):
    """Total log-likelihood of a labeled dev set."""

    kind = "dev"

    def __init__(self, dev):
        if len(dev) == 0:
            raise ValueError("empty dev set")
        self.dev = tuple(dev)
        X, y = stack_labeled(self.dev)
        self._Xa = augment(X)
        self._y = y
        self._rows = np.arange(len(y))

    def value_theta(self, theta):
        logp = _log_softmax_rows(self._Xa @ theta)
        return float(np.sum(np.maximum(logp[self._rows, self._y], _LOG_FLOOR)))

    def grad_theta(self, theta):
        P = np.exp(_log_softmax_rows(self._Xa @ theta))
        Y = np.zeros_like(P)
        Y[self._rows, self._y] = 1.0
        return vec(self._Xa.T @ (Y - P))


class EntropyGoal(Goal):
    """Negative total prediction entropy over an unlabeled context set."""

    kind = "ent"

    def __init__(self, U):
        if len(U) == 0:
            raise ValueError("empty context set")
        self.U = tuple(U)
        self._Xa = augment(stack_features(self.U))

    def value_theta(self, theta):
        P = np.exp(_log_softmax_rows(self._Xa @ theta))
        return float(np.sum(xlogy(P, P)))

    def grad_theta(self, theta):
        # Row-wise term xa * (p .* log p + H(p) * p)^T: the derivative of
        # -H(p) through the softmax.
        P = np.exp(_log_softmax_rows(self._Xa @ theta))
        plogp = xlogy(P, P)
        ent = -np.sum(plogp, axis=1)
        return vec(self._Xa.T @ (plogp + ent[:, None] * P))


class FisherTraceGoal(Goal):
    """Negative mean per-sample Hessian trace over an unlabeled context set."""

    kind = "fir"

    def __init__(self, U, lam: float):
        if len(U) == 0:
            raise ValueError("empty context set")
        if not lam > 0:
            raise ValueError("lam must be positive")
        self.U = tuple(U)
        self.lam = float(lam)
        self._Xa = augment(stack_features(self.U))
        self._sq = np.sum(self._Xa * self._Xa, axis=1)

    def value_theta(self, theta):
        const = self.lam * theta.size
        logger.debug("fir identity-trace constants: full=%.17g interceptless=%.17g",
                     const, self.lam * theta.shape[1])
        P = np.exp(_log_softmax_rows(self._Xa @ theta))
        nu = np.sum(P * P, axis=1)
        return float(-np.mean(const + (1.0 - nu) * self._sq))

    def grad_theta(self, theta):
        # d tr / d theta for one sample is 2*(xa^T xa) * xa ((nu*1 - p) .* p)^T
        # with nu = p^T p; the goal negates and averages.
        P = np.exp(_log_softmax_rows(self._Xa @ theta))
        nu = np.sum(P * P, axis=1)
        M = (nu[:, None] - P) * P
        return vec(-(2.0 / len(self.U)) * (self._Xa.T @ (self._sq[:, None] * M)))


def make_goal(kind: str, *, dev=None, U=None, lam: float | None = None) -> Goal:
    """Build a goal by kind string ('dev', 'ent' or 'fir')."""
    if kind == "dev":
        if dev is None:
            raise ValueError("dev goal needs a labeled dev set")
        return DevLossGoal(dev)
    if kind == "ent":
        if U is None:
            raise ValueError("ent goal needs an unlabeled context set")
        return EntropyGoal(U)
    if kind == "fir":
        if U is None or lam is None:
            raise ValueError("fir goal needs a context set and lam")
        return FisherTraceGoal(U, lam)
    raise ValueError(f"unknown goal kind {kind!r} (expected one of {GOAL_KINDS})")


# ---------------------------------------------------------------------------
# free-function forms
# ---------------------------------------------------------------------------


def tau_dev(model: ModelParams, dev) -> float:
    """Total log-likelihood of the labeled dev set."""
    return DevLossGoal(dev).value(model)


def grad_tau_dev(model: ModelParams, dev) -> np.ndarray:
    """Flat gradient of :func:`tau_dev`."""
    return DevLossGoal(dev).grad(model)


def tau_ent(model: ModelParams, U) -> float:
    """Negative total prediction entropy over the context set."""
    return EntropyGoal(U).value(model)


def grad_tau_ent(model: ModelParams, U) -> np.ndarray:
    """Flat gradient of :func:`tau_ent`."""
    return EntropyGoal(U).grad(model)


def tau_fir(model: ModelParams, U, lam: float) -> float:
    """Negative mean per-sample Hessian trace over the context set."""
    return FisherTraceGoal(U, lam).value(model)


def grad_tau_fir(model: ModelParams, U, lam: float) -> np.ndarray:
    """Flat gradient of :func:`tau_fir`."""
    return FisherTraceGoal(U, lam).grad(model)


def fir_trace_constants(model: ModelParams, lam: float) -> dict:
    """Both candidate constants for tr(lam*I): full (d+1)K and intercept-free K."""
    return {"full": lam * (model.d + 1) * model.K, "interceptless": lam * model.K}


# ---------------------------------------------------------------------------
# conditional Fisher information
# ---------------------------------------------------------------------------


def fisher_conditional(model: ModelParams, x: Sample) -> np.ndarray:
    """Label-conditional Fisher information sum_y p_y s_y s_y^T at one sample.

    ``s_y`` is the score of label y (the negative per-sample loss gradient
    without the L2 term).  The result equals the loss Hessian's data term
    ``(diag(p) - p p^T) (x) (xa xa^T)``; limited to (d+1)*K <= 4096.
    """
    dim = model.theta.size
    if dim > 4096:
        raise ValueError(f"fisher_conditional limited to (d+1)K <= 4096, got {dim}")
    xa = augment(x.features[None, :])[0]
    p = np.exp(predict_log_proba_matrix(model, x.features[None, :])[0])
    F = np.zeros((dim, dim))
    for y in range(model.K):
        ey = np.zeros(model.K)
        ey[y] = 1.0
        s = vec(-np.outer(xa, ey - p))
        F += p[y] * np.outer(s, s)
    return F
