"""Pool-based active-learning strategies and the query loop.

Strategies score every remaining pool sample, then :func:`select_batch` takes
the top-b scores (ties to the smaller pool index, output sorted ascending):

* ``random``       -- i.i.d. scores from a dedicated seeded stream
* ``uncertainty``  -- prediction entropy of the current model
* ``goral``        -- goal-oriented approximate utilities from an influence
                      engine, for a configured goal and label resolver

Strategy spec strings: ``random``, ``uncertainty``,
``goral:<goal>:<resolver>`` (e.g. ``goral:dev:oracle``,
``goral:ent:expectation:uniform``, ``goral:fir:min``).

The loop retrains from scratch semantics with warm starts: at each iteration
the L2 strength is recomputed as ``1/(n*C)`` for the current labeled count,
the model is retrained (warm-started from the previous iterate), the engine is
rebuilt, the batch is queried, and hidden labels are revealed.  Goal context
sets are frozen once at loop start: the dev set stays as sampled, and the
unlabeled context for ent/fir goals is the full initial pool.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .datasets import ALInstance, LabeledSample, Sample
from .goals import GOAL_KINDS, Goal, make_goal
from .influence import InfluenceEngine, SolverConfig, build_engine
from .model import (ModelParams, TrainConfig, accuracy, lambda_from_C,
                    predict_proba_matrix, stack_features, train)
from .operators import LabelResolver, parse_resolver, resolver_spec

__all__ = [
    "Strategy",
    "parse_strategy",
    "strategy_spec",
    "IterationRecord",
    "ALHistory",
    "score_pool",
    "select_batch",
    "run_al_loop",
]

logger = logging.getLogger(__name__)

STRATEGY_KINDS = ("random", "uncertainty", "goral")


@dataclass(frozen=True)
class Strategy:
    """A scoring rule; ``goal_kind``/``resolver`` are set iff kind == 'goral'."""

    kind: str
    goal_kind: str | None = None
    resolver: LabelResolver | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "goral":
            if self.goal_kind is None or self.resolver is None:
                raise ValueError("goral strategy needs a goal kind and a resolver")
            if self.goal_kind not in GOAL_KINDS:
                raise ValueError(f"unknown goal kind {self.goal_kind!r} "
                                 f"(expected one of {GOAL_KINDS})")
        elif self.goal_kind is not None or self.resolver is not None:
            raise ValueError(f"{self.kind} strategy takes no goal/resolver")


def parse_strategy(spec: str, seed: int = 0) -> Strategy:
    """Parse a strategy spec string (grammar in the module docstring)."""
    spec = spec.strip()
    if spec == "random":
        return Strategy("random", seed=seed)
    if spec == "uncertainty":
        return Strategy("uncertainty", seed=seed)
    if spec.startswith("goral:"):
        rest = spec[len("goral:"):]
        goal_kind, sep, resolver_part = rest.partition(":")
        if not sep:
            raise ValueError(f"goral spec needs a resolver: {spec!r}")
        return Strategy("goral", goal_kind=goal_kind,
                        resolver=parse_resolver(resolver_part), seed=seed)
    raise ValueError(f"unknown strategy spec {spec!r}")


def strategy_spec(strategy: Strategy) -> str:
    """Inverse of :func:`parse_strategy`."""
    if strategy.kind != "goral":
        return strategy.kind
    return f"goral:{strategy.goal_kind}:{resolver_spec(strategy.resolver)}"


@dataclass
class IterationRecord:
    """One loop iteration: what was queried and how the retrained model scored."""

    iteration: int
    queried_ids: list
    n_labeled: int
    test_accuracy: float
    goal_value: float | None
    lam: float
    pool_utilities: dict | None = None  # id -> score snapshot, when requested


@dataclass
class ALHistory:
    """Full record of one active-learning run."""

    strategy: str
    seed: int
    b: int
    C: float
    records: list = field(default_factory=list)
    final_model: ModelParams | None = None

    @property
    def queried_ids(self):
        out = []
        for r in self.records:
            out.extend(r.queried_ids)
        return out


def score_pool(strategy: Strategy, model: ModelParams, engine: InfluenceEngine | None,
               pool, rng: np.random.Generator | None = None,
               hidden_labels=None) -> np.ndarray:
    """Scores for the remaining pool samples, one per sample, larger = better."""
    if len(pool) == 0:
        raise ValueError("empty pool")
    if strategy.kind == "random":
        if rng is None:
            raise ValueError("random strategy needs its rng stream")
        return rng.random(len(pool))
    if strategy.kind == "uncertainty":
        P = predict_proba_matrix(model, stack_features(pool))
        return -np.sum(xlogy(P, P), axis=1)
    if engine is None:
        raise ValueError("goral strategy needs an influence engine")
    labels = hidden_labels if strategy.resolver.kind == "oracle" else None
    if strategy.resolver.kind == "oracle" and labels is None:
        raise ValueError("oracle resolver needs hidden labels")
    return engine.approx_utilities(pool, strategy.resolver, labels)


def select_batch(utilities: np.ndarray, b: int) -> list:
    """Indices of the b largest scores; ties to the smaller index; sorted output."""
    utilities = np.asarray(utilities, dtype=float)
    if b < 1 or b > utilities.size:
        raise ValueError(f"b must be in [1, {utilities.size}], got {b}")
    order = np.argsort(-utilities, kind="stable")
    return sorted(int(i) for i in order[:b])


def run_al_loop(instance: ALInstance, strategy: Strategy, b: int, budget: int,
                C: float, cfg: TrainConfig | None = None,
                record_goal: Goal | None = None,
                solver: SolverConfig | None = None,
                snapshot_utilities: bool = False) -> ALHistory:
    """Run ``budget`` query iterations and return the full history.

    Record 0 describes the init-trained model; record t the model after the
    t-th batch.  ``record_goal`` lets baselines log a goal curve; a goral
    strategy defaults to logging its own goal.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if b < 1 or budget * b > len(instance.pool):
        raise ValueError(f"budget*b = {budget * b} exceeds pool size {len(instance.pool)}")
    base_cfg = cfg or TrainConfig(lam=1.0)

    goal = record_goal
    fir_follows_lam = False
    if strategy.kind == "goral":
        lam0 = lambda_from_C(C, len(instance.init))
        goal = _strategy_goal(strategy, instance, lam0)
        fir_follows_lam = strategy.goal_kind == "fir"
    dev_ids = {z.sample.id for z in instance.dev} if instance.dev else set()

    labeled = list(instance.init)
    remaining = list(range(len(instance.pool)))
    rng = np.random.default_rng(strategy.seed)

    lam = lambda_from_C(C, len(labeled))
    cfg_t = TrainConfig(lam=lam, grad_tol=base_cfg.grad_tol,
                        max_iter=base_cfg.max_iter, n_classes=instance.K)
    model = train(labeled, cfg_t)
    history = ALHistory(strategy=strategy_spec(strategy), seed=strategy.seed, b=b, C=C)
    history.records.append(IterationRecord(
        iteration=0, queried_ids=[], n_labeled=len(labeled),
        test_accuracy=accuracy(model, instance.test),
        goal_value=goal.value(model) if goal is not None else None, lam=lam))

    for t in range(1, budget + 1):
        pool_samples = [instance.pool[i] for i in remaining]
        hidden = [instance.hidden_pool_labels[i] for i in remaining]
        engine = None
        if strategy.kind == "goral":
            if fir_follows_lam:
                goal.lam = lam  # trace constant follows the current objective
            engine = build_engine(model, labeled, lam, goal, solver)
        scores = score_pool(strategy, model, engine, pool_samples, rng=rng,
                            hidden_labels=hidden)
        chosen = select_batch(scores, b)
        queried_ids = [pool_samples[i].id for i in chosen]
        snapshot = None
        if snapshot_utilities:
            snapshot = {pool_samples[i].id: float(scores[i]) for i in range(len(scores))}
        overlap = [i for i in queried_ids if i in dev_ids]
        if overlap:
            logger.info("iteration %d queried dev members: %s", t, overlap)

        for i in chosen:
            labeled.append(LabeledSample(pool_samples[i], hidden[i]))
        chosen_set = set(chosen)
        remaining = [remaining[i] for i in range(len(remaining)) if i not in chosen_set]

        lam = lambda_from_C(C, len(labeled))
        cfg_t = TrainConfig(lam=lam, grad_tol=base_cfg.grad_tol,
                            max_iter=base_cfg.max_iter, warm_start=model)
        model = train(labeled, cfg_t)
        history.records.append(IterationRecord(
            iteration=t, queried_ids=queried_ids, n_labeled=len(labeled),
            test_accuracy=accuracy(model, instance.test),
            goal_value=goal.value(model) if goal is not None else None, lam=lam,
            pool_utilities=snapshot))

    history.final_model = model
    return history


def _strategy_goal(strategy: Strategy, instance: ALInstance, lam0: float) -> Goal:
    if strategy.goal_kind == "dev":
        if instance.dev is None:
            raise ValueError("goral:dev needs a dev set on the instance")
        return make_goal("dev", dev=instance.dev)
    return make_goal(strategy.goal_kind, U=instance.pool, lam=lam0)
