"""Shared fixtures: small trained contexts reused across test modules."""

from __future__ import annotations

import numpy as np
import pytest

import helpers
from goralab.datasets import LabeledSample, Sample
from goralab.goals import make_goal
from goralab.influence import build_engine
from goralab.model import TrainConfig, lambda_from_C, train

# One status line per acceptance criterion, echoed after the test summary so
# the checklist is visible in plain ``pytest -v`` output.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class Ctx:
    """A trained model plus everything needed to build goals and engines."""

    def __init__(self, train_set, lam, K, pool=None, hidden=None, dev=None):
        self.train_set = list(train_set)
        self.lam = lam
        self.K = K
        self.n = len(self.train_set)
        self.pool = pool or []
        self.hidden = hidden or []
        self.dev = dev or []
        self.cfg = TrainConfig(lam=lam, n_classes=K)
        self.model = train(self.train_set, self.cfg)

    def goal(self, kind):
        if kind == "dev":
            return make_goal("dev", dev=self.dev)
        return make_goal(kind, U=[z.sample for z in self.dev] + self.pool,
                         lam=self.lam)

    def engine(self, kind):
        return build_engine(self.model, self.train_set, self.lam, self.goal(kind))


@pytest.fixture(scope="session")
def small_ctx():
    """30 training samples, d=4, K=3, with a 12-sample dev set and a pool.

    Lightly-noised blobs at a moderate lambda: probabilities stay well away
    from 0/1, so finite differences and CG systems are well-conditioned.
    """
    train_set, pool, hidden = helpers.blob_train_pool(
        n=72, d=4, K=3, seed=11, noise=0.8, n_train=30, n_pool=30)
    dev = [LabeledSample(pool[i], hidden[i]) for i in range(12)]
    lam = lambda_from_C(0.5, 30)
    return Ctx(train_set, lam, 3, pool=pool[12:], hidden=hidden[12:], dev=dev)


@pytest.fixture(scope="session")
def binary_ctx():
    """A K=2, d=3 context for tests that need tiny dimensions."""
    train_set, pool, hidden = helpers.blob_train_pool(
        n=40, d=3, K=2, seed=5, noise=0.9, n_train=20, n_pool=20)
    dev = [LabeledSample(pool[i], hidden[i]) for i in range(8)]
    lam = 0.1
    return Ctx(train_set, lam, 2, pool=pool[8:], hidden=hidden[8:], dev=dev)
