"""Multinomial logistic regression: probabilities, losses, Hessians, training.

Oracles: 60-digit mpmath softmax, numpy.logaddexp objective minimized by
scipy L-BFGS-B, dense Kronecker Hessian assembly, central finite differences.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import helpers
from goralab.datasets import LabeledSample, Sample, generate_class_blobs
from goralab.model import (ModelParams, TrainConfig, TrainingError, accuracy,
                           augment, cross_validate_C, dense_hessian,
                           fit_weighted, hessian_vector_product, lambda_from_C,
                           load_checkpoint, per_sample_grad, per_sample_loss,
                           predict_log_proba_matrix, predict_proba,
                           predict_proba_matrix, save_checkpoint,
                           stack_labeled, train, unvec, vec)


# ---------------------------------------------------------------------------
# layout helpers
# ---------------------------------------------------------------------------

def test_vec_is_column_major():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(vec(m), np.array([1.0, 3.0, 2.0, 4.0]))
    assert np.array_equal(unvec(vec(m), 2, 2), m)


@settings(max_examples=30, deadline=None)
@given(rows=st.integers(2, 6), cols=st.integers(2, 5), seed=st.integers(0, 99))
def test_vec_unvec_round_trip(rows, cols, seed):
    m = np.random.default_rng(seed).normal(size=(rows, cols))
    assert np.array_equal(unvec(vec(m), rows, cols), m)


def test_augment_appends_intercept_column():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    Xa = augment(X)
    assert Xa.shape == (2, 3)
    assert np.array_equal(Xa[:, -1], np.ones(2))
    assert np.array_equal(Xa[:, :2], X)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(np.zeros((1, 2)))  # needs at least one feature row
    with pytest.raises(ValueError):
        ModelParams(np.array([[np.inf, 0.0], [0.0, 0.0]]))
    m = ModelParams(np.zeros((3, 4)))
    assert m.d == 2 and m.K == 4
    with pytest.raises(ValueError):
        m.theta[0, 0] = 1.0  # frozen


# ---------------------------------------------------------------------------
# probabilities
# ---------------------------------------------------------------------------

def test_zero_theta_gives_uniform_probabilities():
    m = ModelParams(np.zeros((4, 3)))
    x = Sample(np.array([0.3, -1.0, 2.0]), 0)
    assert np.allclose(predict_proba(m, x), np.full(3, 1 / 3), rtol=0, atol=1e-15)


def test_probabilities_match_extended_precision_oracle():
    rng = np.random.default_rng(8)
    for trial in range(10):
        d, K = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        m = helpers.random_theta(d, K, seed=100 + trial, scale=2.0)
        x = rng.normal(size=d)
        got = predict_proba_matrix(m, x[None, :])[0]
        want = helpers.mp_probs(m.theta, np.append(x, 1.0))
        assert helpers.rel_err(got, want) < 1e-12


def test_probability_rows_sum_to_one_and_logs_match():
    m = helpers.random_theta(3, 4, seed=1)
    X = np.random.default_rng(2).normal(size=(20, 3))
    P = predict_proba_matrix(m, X)
    L = predict_log_proba_matrix(m, X)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(np.exp(L), P, atol=1e-15)
    assert np.all(P > 0)


def test_probabilities_stable_under_huge_logits():
    # logits ~ 1e4: naive exp overflows, the shifted path must not
    m = ModelParams(np.array([[5000.0, -5000.0], [0.0, 0.0]]))
    x = Sample(np.array([2.0]), 0)
    p = predict_proba(m, x)
    assert np.all(np.isfinite(p)) and abs(p.sum() - 1.0) < 1e-12
    assert p[0] > 1 - 1e-12


def test_predict_dimension_mismatch_rejected():
    m = helpers.random_theta(3, 2, seed=0)
    with pytest.raises(ValueError, match="dimension"):
        predict_proba_matrix(m, np.zeros((2, 5)))


# ---------------------------------------------------------------------------
# per-sample loss / gradient
# ---------------------------------------------------------------------------

def test_loss_at_zero_theta_is_log_K():
    x = Sample(np.array([0.7, -0.2]), 0)
    for K in (2, 3, 5):
        m = ModelParams(np.zeros((3, K)))
        z = LabeledSample(x, K - 1)
        assert per_sample_loss(z, m, 0.0) == pytest.approx(np.log(K), abs=1e-15)


def test_loss_includes_ridge_term():
    m = helpers.random_theta(2, 2, seed=3)
    z = LabeledSample(Sample(np.array([1.0, -1.0]), 0), 1)
    base = per_sample_loss(z, m, 0.0)
    lam = 0.37
    want = base + 0.5 * lam * np.sum(m.theta**2)
    assert per_sample_loss(z, m, lam) == pytest.approx(want, rel=1e-14)


def test_loss_matches_extended_precision_log_prob():
    m = helpers.random_theta(4, 3, seed=9, scale=1.5)
    z = LabeledSample(Sample(np.random.default_rng(0).normal(size=4), 0), 2)
    want = -helpers.mp_log_prob(m.theta, np.append(z.sample.features, 1.0), 2)
    assert per_sample_loss(z, m, 0.0) == pytest.approx(want, rel=1e-13)


def test_loss_finite_under_probability_floor():
    # confident wrong label: log p would underflow without the floor
    m = ModelParams(np.array([[4000.0, -4000.0], [0.0, 0.0]]))
    z = LabeledSample(Sample(np.array([1.0]), 0), 1)
    loss = per_sample_loss(z, m, 0.0)
    assert np.isfinite(loss)
    assert loss == pytest.approx(-np.log(1e-300), rel=1e-12)


def test_grad_at_zero_theta_closed_form():
    x = np.array([0.5, -2.0, 1.0])
    for K, y in [(2, 0), (3, 2), (4, 1)]:
        m = ModelParams(np.zeros((4, K)))
        z = LabeledSample(Sample(x, 0), y)
        ey = np.zeros(K)
        ey[y] = 1.0
        want = -np.outer(np.append(x, 1.0), ey - np.full(K, 1.0 / K))
        got = per_sample_grad(z, m, 0.0)
        assert np.allclose(got, want.reshape(-1, order="F"), atol=1e-15)


@pytest.mark.parametrize("step,tol", [(1e-4, 1e-6), (1e-5, 1e-5)])
def test_grad_matches_finite_differences(step, tol):
    rng = np.random.default_rng(17)
    for trial in range(6):
        d, K = int(rng.integers(1, 5)), int(rng.integers(2, 5))
        lam = float(rng.uniform(0.01, 1.0))
        z = LabeledSample(Sample(rng.normal(size=d), 0), int(rng.integers(0, K)))
        m = helpers.random_theta(d, K, seed=300 + trial)

        def f(tv):
            return per_sample_loss(z, ModelParams(unvec(tv, d + 1, K)), lam)

        fd = helpers.central_fd_grad(f, vec(m.theta), step)
        assert helpers.vector_rel_err(per_sample_grad(z, m, lam), fd) < tol


def test_grad_regularizer_is_additive():
    m = helpers.random_theta(3, 3, seed=4)
    z = LabeledSample(Sample(np.array([1.0, 0.5, -0.5]), 0), 1)
    g0 = per_sample_grad(z, m, 0.0)
    g1 = per_sample_grad(z, m, 0.8)
    assert np.allclose(g1 - g0, 0.8 * vec(m.theta), atol=1e-14)


# ---------------------------------------------------------------------------
# Hessian products
# ---------------------------------------------------------------------------

def _random_train(n, d, K, seed):
    return helpers.random_labeled(n, d, K, seed=seed)


def test_hvp_matches_dense_hessian():
    train_set = _random_train(12, 4, 3, seed=2)
    m = helpers.random_theta(4, 3, seed=5)
    lam = 0.2
    H = dense_hessian(m, train_set, lam)
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.normal(size=H.shape[0])
        got = hessian_vector_product(m, train_set, lam, v)
        assert helpers.vector_rel_err(got, H @ v) < 1e-10


def test_dense_hessian_matches_kronecker_oracle():
    for d, K in [(2, 2), (5, 4), (3, 3)]:
        train_set = _random_train(7, d, K, seed=d + K)
        m = helpers.random_theta(d, K, seed=d * K)
        lam = 0.15
        H = dense_hessian(m, train_set, lam)
        H_oracle = helpers.kron_hessian(m, train_set, lam)
        assert np.max(np.abs(H - H_oracle)) < 1e-12


def test_hvp_matches_directional_finite_difference():
    train_set = _random_train(10, 3, 3, seed=6)
    m = helpers.random_theta(3, 3, seed=7)
    lam = 0.3
    Xa, y = augment(stack_labeled(train_set)[0]), stack_labeled(train_set)[1]

    def mean_grad(tv):
        mdl = ModelParams(unvec(tv, 4, 3))
        return np.mean([per_sample_grad(z, mdl, lam) for z in train_set], axis=0)

    rng = np.random.default_rng(1)
    for _ in range(5):
        v = rng.normal(size=12)
        h = 1e-5
        fd = (mean_grad(vec(m.theta) + h * v) - mean_grad(vec(m.theta) - h * v)) / (2 * h)
        got = hessian_vector_product(m, train_set, lam, v)
        assert helpers.vector_rel_err(got, fd) < 1e-5


def test_hessian_symmetric_and_positive_definite():
    train_set = _random_train(9, 3, 4, seed=8)
    m = helpers.random_theta(3, 4, seed=9)
    lam = 0.05
    rng = np.random.default_rng(2)
    for _ in range(10):
        u = rng.normal(size=16)
        v = rng.normal(size=16)
        Hu = hessian_vector_product(m, train_set, lam, u)
        Hv = hessian_vector_product(m, train_set, lam, v)
        assert abs(np.dot(v, Hu) - np.dot(u, Hv)) < 1e-10 * max(1.0, abs(np.dot(v, Hu)))
        quad = float(np.dot(v, Hv))
        assert quad >= lam * np.dot(v, v) - 1e-10


def test_hessian_constant_class_direction_feels_only_ridge():
    # Lambda 1 = 0: repeating the same column across classes nulls the
    # data part, so H v = lam v exactly for v = vec(u 1^T).
    train_set = _random_train(8, 4, 3, seed=10)
    m = helpers.random_theta(4, 3, seed=11)
    lam = 0.7
    u = np.random.default_rng(3).normal(size=5)
    v = vec(np.tile(u[:, None], (1, 3)))
    got = hessian_vector_product(m, train_set, lam, v)
    assert np.allclose(got, lam * v, atol=1e-12)


def test_hvp_input_validation():
    train_set = _random_train(5, 2, 2, seed=0)
    m = helpers.random_theta(2, 2, seed=0)
    with pytest.raises(ValueError):
        hessian_vector_product(m, train_set, 0.1, np.zeros(5))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def test_training_objective_matches_independent_optimizer():
    # 20 samples: package Newton vs scipy L-BFGS-B on an independently
    # coded objective; the two objective values must agree to 1e-8.
    data = generate_class_blobs(n=20, d=4, K=3, seed=4, noise=0.6)
    lam = lambda_from_C(0.5, 20)
    Xa, y = augment(stack_labeled(data)[0]), stack_labeled(data)[1]
    mdl = train(data, TrainConfig(lam=lam))
    ours = helpers.naive_objective(vec(mdl.theta), Xa, y, lam, 3)
    theirs_theta = helpers.lbfgs_fit(Xa, y, lam, 3)
    theirs = helpers.naive_objective(theirs_theta, Xa, y, lam, 3)
    assert abs(ours - theirs) < 1e-8
    assert ours <= theirs + 1e-10  # never worse than the reference optimizer


def test_train_reaches_gradient_tolerance():
    data = generate_class_blobs(n=25, d=3, K=3, seed=1, noise=0.7)
    lam = 0.05
    mdl = train(data, TrainConfig(lam=lam, grad_tol=1e-9))
    g = np.mean([per_sample_grad(z, mdl, lam) for z in data], axis=0)
    assert np.max(np.abs(g)) < 1e-9


def test_train_deterministic():
    data = generate_class_blobs(n=30, d=3, K=2, seed=2, noise=0.8)
    a = train(data, TrainConfig(lam=0.1))
    b = train(data, TrainConfig(lam=0.1))
    assert np.array_equal(a.theta, b.theta)


def test_train_symmetric_data_predicts_uniform_at_origin():
    # mirror pairs (x, 0) / (-x, 1): the unique optimum is sign-symmetric,
    # so both intercepts coincide and the origin scores 50/50
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(6, 3))
    data = []
    for i, x in enumerate(pts):
        data.append(LabeledSample(Sample(x, 2 * i), 0))
        data.append(LabeledSample(Sample(-x, 2 * i + 1), 1))
    mdl = train(data, TrainConfig(lam=0.2, grad_tol=1e-10))
    p = predict_proba(mdl, Sample(np.zeros(3), 99))
    assert np.allclose(p, [0.5, 0.5], atol=1e-9)


def test_train_idempotent_from_optimum():
    data = generate_class_blobs(n=24, d=3, K=3, seed=3, noise=0.7)
    cfg = TrainConfig(lam=0.1, grad_tol=1e-10)
    m1 = train(data, cfg)
    m2 = train(data, TrainConfig(lam=0.1, grad_tol=1e-10, warm_start=m1))
    assert np.max(np.abs(m2.theta - m1.theta)) < 1e-10


def test_warm_start_saves_newton_iterations():
    # frozen instance: 41 blob samples, fit the first 40, then add one.
    # A cold restart needs 5 Newton steps, the warm start only 3.
    data = generate_class_blobs(n=41, d=5, K=3, seed=0, noise=0.8)
    lam = 0.1
    Xa, y = augment(stack_labeled(data)[0]), stack_labeled(data)[1]
    w40 = np.full(40, 1.0 / 40)
    base = fit_weighted(Xa[:40], y[:40], w40, lam, 3)
    assert base.converged and base.n_iter == 5
    w41 = np.full(41, 1.0 / 41)
    cold = fit_weighted(Xa, y, w41, lam, 3)
    warm = fit_weighted(Xa, y, w41, lam, 3, theta0=base.theta)
    assert cold.converged and warm.converged
    assert (cold.n_iter, warm.n_iter) == (5, 3)
    assert warm.n_iter < cold.n_iter
    assert np.max(np.abs(warm.theta - cold.theta)) < 1e-6


def test_train_error_when_budgeted_out():
    data = generate_class_blobs(n=40, d=6, K=4, seed=5, noise=1.2)
    with pytest.raises(TrainingError, match="gradient"):
        train(data, TrainConfig(lam=1e-4, grad_tol=1e-12, max_iter=1))


def test_train_input_validation():
    with pytest.raises(ValueError, match="empty"):
        train([], TrainConfig(lam=0.1))
    # non-finite features never reach the trainer: Sample rejects them
    with pytest.raises(ValueError, match="non-finite"):
        Sample(np.array([1.0, np.nan]), 0)


def test_train_single_class_needs_declared_K():
    data = [LabeledSample(Sample(np.array([float(i)]), i), 0) for i in range(4)]
    with pytest.raises(ValueError, match="distinct classes"):
        train(data, TrainConfig(lam=0.1))
    mdl = train(data, TrainConfig(lam=0.1, n_classes=3))
    assert mdl.K == 3


def test_train_rejects_label_out_of_declared_range():
    data = [LabeledSample(Sample(np.array([0.0]), 0), 0),
            LabeledSample(Sample(np.array([1.0]), 1), 3)]
    with pytest.raises(ValueError, match="out of range"):
        train(data, TrainConfig(lam=0.1, n_classes=2))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lam=0.0)
    with pytest.raises(ValueError):
        TrainConfig(lam=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(lam=0.1, max_iter=0)
    with pytest.raises(ValueError):
        TrainConfig(lam=0.1, grad_tol=0.0)


# ---------------------------------------------------------------------------
# lambda mapping, cross-validation
# ---------------------------------------------------------------------------

def test_lambda_from_C_spot_values():
    assert lambda_from_C(0.1, 10) == 1.0
    assert lambda_from_C(1.0, 52) == 1.0 / 52.0
    assert lambda_from_C(2.0, 5) == 0.1


def test_lambda_from_C_errors():
    for C, n in [(0.0, 10), (-1.0, 10), (np.inf, 10), (1.0, 0), (1.0, -3)]:
        with pytest.raises(ValueError):
            lambda_from_C(C, n)


def test_cross_validate_single_element_grid():
    data = generate_class_blobs(n=30, d=2, K=2, seed=0, noise=0.5)
    assert cross_validate_C(data, [0.37], folds=3) == 0.37


def test_cross_validate_prefers_better_likelihood():
    # crank noise down: strong regularization (tiny C) must lose
    data = generate_class_blobs(n=60, d=2, K=2, seed=1, noise=0.25)
    best = cross_validate_C(data, [1e-4, 10.0], folds=4)
    assert best == 10.0


def test_cross_validate_tie_goes_to_smaller_C():
    # all-zero features with balanced folds: the optimum is the zero model
    # for every C, so held-out likelihood ties exactly across the grid
    data = [LabeledSample(Sample(np.zeros(2), i), i % 2) for i in range(8)]
    chosen_seed = None
    for seed in range(50):
        perm = np.random.default_rng(seed).permutation(8)
        halves = [perm[:4], perm[4:]]
        if all(sum(i % 2 for i in h) == 2 for h in halves):
            chosen_seed = seed
            break
    assert chosen_seed is not None
    assert cross_validate_C(data, [5.0, 0.5], folds=2, seed=chosen_seed) == 0.5


def test_cross_validate_validation():
    data = generate_class_blobs(n=10, d=2, K=2, seed=0)
    with pytest.raises(ValueError):
        cross_validate_C(data, [])
    with pytest.raises(ValueError):
        cross_validate_C(data, [1.0], folds=1)
    with pytest.raises(ValueError):
        cross_validate_C(data, [1.0], folds=11)


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

def _sign_model():
    # logit(class 1) - logit(class 0) = x, so prediction is 1[x > 0]
    return ModelParams(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_accuracy_half_right():
    m = _sign_model()
    test_set = [LabeledSample(Sample(np.array([-1.0]), 0), 0),   # right
                LabeledSample(Sample(np.array([2.0]), 1), 1),    # right
                LabeledSample(Sample(np.array([-3.0]), 2), 1),   # wrong
                LabeledSample(Sample(np.array([1.0]), 3), 0)]    # wrong
    assert accuracy(m, test_set) == 0.5


def test_accuracy_hand_counted_ten_samples():
    m = _sign_model()
    xs = [-5.0, -4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    ys = [0, 0, 1, 0, 1, 1, 0, 1, 1, 1]  # predictions: 0 x5 then 1 x5
    test_set = [LabeledSample(Sample(np.array([x]), i), y)
                for i, (x, y) in enumerate(zip(xs, ys))]
    # matches: x<0 & y=0 -> 3, x>0 & y=1 -> 4
    assert accuracy(m, test_set) == pytest.approx(0.7)


def test_accuracy_argmax_tie_prefers_smaller_class():
    m = _sign_model()
    at_zero_0 = [LabeledSample(Sample(np.array([0.0]), 0), 0)]
    at_zero_1 = [LabeledSample(Sample(np.array([0.0]), 0), 1)]
    assert accuracy(m, at_zero_0) == 1.0
    assert accuracy(m, at_zero_1) == 0.0


def test_accuracy_empty_test_set_rejected():
    with pytest.raises(ValueError):
        accuracy(_sign_model(), [])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip_exact(tmp_path):
    m = helpers.random_theta(5, 4, seed=21, scale=3.0)
    p = tmp_path / "model.ckpt"
    save_checkpoint(m, 0.0123456789012345678, p)
    back, lam = load_checkpoint(p)
    assert np.array_equal(back.theta, m.theta)
    assert lam == 0.0123456789012345678
    assert back.d == 5 and back.K == 4


def test_checkpoint_header_mismatch_rejected(tmp_path):
    m = helpers.random_theta(2, 2, seed=0)
    p = tmp_path / "model.ckpt"
    save_checkpoint(m, 0.5, p)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")  # drop one weight row
    with pytest.raises(ValueError, match="does not match header"):
        load_checkpoint(p)
