from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import THETA0
from pgnn_ff.basis import BasisMap, eval_basis
from pgnn_ff.core import CLM_SPEC, Dataset, LipParams, NNLayer, NNParams, PGNNParams, flatten_pgnn, unflatten_pgnn
from pgnn_ff.errors import DivergenceError, SingularMatrixError
from pgnn_ff.lip import fit_lip_rows
from pgnn_ff.nn import init_hidden_random, nn_forward
from pgnn_ff.training import (
    Rows,
    TrainingConfig,
    cost_gradient,
    init_output_layer,
    initial_model,
    make_rows,
    max_abs_scaling,
    mse_cost,
    output_layer_system,
    pgnn_predict,
    pinn_cost,
    pinn_cost_gradient,
    predict_rows,
    regularized_cost,
    strict_improvement_condition,
    train_rows,
)


@pytest.fixture(scope="module")
def rows(ident_data, bmap):
    return make_rows(ident_data, bmap, CLM_SPEC, subsample=50)


@pytest.fixture(scope="module")
def lip(rows):
    return LipParams(fit_lip_rows(rows.T, rows.u))


def random_model(rng, rows, widths=(4, 6), theta=None):
    hidden = init_hidden_random(list(widths), int(rng.integers(1 << 30)))
    nn = hidden.with_output(rng.normal(0, 5, widths[-1]), rng.normal())
    theta = rng.normal(size=4) * THETA0 if theta is None else theta
    return PGNNParams(nn, theta, max_abs_scaling(rows.X))


def small_rows(rows, n=40):
    return Rows(rows.T[:n], rows.X[:n], rows.u[:n])


# prediction and costs


def test_predict_reduces_to_lip(rows, lip):
    hidden = init_hidden_random([4, 8], 0)
    m = PGNNParams(hidden, lip.theta, max_abs_scaling(rows.X))
    np.testing.assert_array_equal(predict_rows(m, rows), predict_rows(lip, rows))


def test_predict_parts(rows, bmap):
    rng = np.random.default_rng(0)
    m = random_model(rng, rows)
    phi = np.array([2e-6, 1e-6, 0.5e-6])
    T = eval_basis(bmap, phi)
    nn_part = nn_forward(m.nn, T * m.input_scaling)
    assert pgnn_predict(m, bmap, phi) == pytest.approx(nn_part + T @ m.theta_phy, rel=1e-12)
    zero_phy = replace(m, theta_phy=np.zeros(4))
    assert pgnn_predict(zero_phy, bmap, phi) == pytest.approx(nn_part, rel=1e-15)


def test_mse_examples(rows, lip):
    perfect = Rows(rows.T, rows.X, rows.T @ lip.theta)
    assert mse_cost(lip, perfect) == 0.0
    threes = Rows(rows.T, rows.X, np.full(rows.n, 3.0))
    assert mse_cost(LipParams(np.zeros(4)), threes) == 9.0
    pred = predict_rows(lip, rows)
    naive = sum((a - b) ** 2 for a, b in zip(rows.u, pred)) / rows.n
    assert mse_cost(lip, rows) == pytest.approx(naive, rel=1e-12)


def test_regularized_cost_terms(rows, lip):
    rng = np.random.default_rng(1)
    m = random_model(rng, rows, theta=lip.theta)
    cfg = TrainingConfig(lip, 0.5)
    c = regularized_cost(m, rows, cfg)
    assert c.reg == 0.0 and c.total == c.data_fit == mse_cost(m, rows)
    zero_nn = PGNNParams(init_hidden_random([4, 6], 0), lip.theta, m.input_scaling)
    assert regularized_cost(zero_nn, rows, cfg).total == mse_cost(lip, rows)
    shifted = replace(m, theta_phy=lip.theta + np.array([1.0, 0, 0, 0]))
    assert regularized_cost(shifted, rows, TrainingConfig(lip, 1.0)).reg == pytest.approx(1.0, rel=1e-12)
    assert regularized_cost(shifted, rows, TrainingConfig(lip, 1.0, mode="unregularized")).reg == 0.0


def test_pinn_cost_examples(rows, lip):
    rng = np.random.default_rng(2)
    m = random_model(rng, rows)
    f = predict_rows(replace(m, nn_only=True), rows)
    c0 = pinn_cost(m, rows, TrainingConfig(lip, pinn_lambda=0.0))
    assert c0.total == pytest.approx(np.mean((rows.u - f) ** 2), rel=1e-12)
    lam = 0.3
    c = pinn_cost(m, rows, TrainingConfig(lip, pinn_lambda=lam))
    naive = sum((u - a) ** 2 + lam * (a - t @ m.theta_phy) ** 2 for u, a, t in zip(rows.u, f, rows.T)) / rows.n
    assert c.total == pytest.approx(naive, rel=1e-12)
    # network equal to the physical layer: identity activation, output weights theta / scaling
    s = m.input_scaling
    nn = NNParams((NNLayer(np.eye(4), np.zeros(4)), NNLayer((lip.theta / s)[None, :], [0.0])), "identity")
    same = PGNNParams(nn, lip.theta, s)
    c = pinn_cost(same, rows, TrainingConfig(lip, pinn_lambda=1.0))
    assert c.reg <= 1e-20 * c.data_fit


# gradients


def fd_grad(cost, model, h_rel=1e-6):
    x = flatten_pgnn(model)
    g = np.empty_like(x)
    for i in range(x.size):
        h = h_rel * max(abs(x[i]), 1e-3)
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (cost(unflatten_pgnn(up, model)) - cost(unflatten_pgnn(dn, model))) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(5))
def test_cost_gradient_matches_differences(rows, lip, seed):
    rng = np.random.default_rng(seed)
    r = small_rows(rows)
    m = random_model(rng, r, theta=lip.theta * (1 + 0.1 * rng.normal(size=4)))
    cfg = TrainingConfig(lip, rng.uniform(0, 1, 4))
    g = flatten_pgnn(cost_gradient(m, r, cfg))
    fd = fd_grad(lambda p: regularized_cost(p, r, cfg).total, m)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-5 * np.max(np.abs(fd)))


@pytest.mark.parametrize("seed", range(3))
def test_pinn_gradient_matches_differences(rows, lip, seed):
    rng = np.random.default_rng(seed)
    r = small_rows(rows)
    m = random_model(rng, r, theta=lip.theta)
    cfg = TrainingConfig(lip, mode="pinn_baseline", pinn_lambda=0.7)
    g = flatten_pgnn(pinn_cost_gradient(m, r, cfg))
    fd = fd_grad(lambda p: pinn_cost(p, r, cfg).total, m)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-5 * np.max(np.abs(fd)))


def test_gradient_stationary_at_lip_on_lip_data(rows, lip):
    perfect = Rows(rows.T, rows.X, rows.T @ lip.theta)
    m = PGNNParams(init_hidden_random([4, 6], 0), lip.theta, max_abs_scaling(rows.X))
    g = cost_gradient(m, perfect, TrainingConfig(lip, 0.01)).theta_phy
    assert np.all(np.abs(g) <= 1e-9 * np.abs(perfect.T).max(axis=0) * np.abs(perfect.u).max())


def test_regularization_gradient_is_linear_in_lambda(rows, lip):
    rng = np.random.default_rng(3)
    m = random_model(rng, rows, theta=lip.theta + 1.0)
    g = {k: cost_gradient(m, rows, TrainingConfig(lip, k * 0.2)).theta_phy for k in (0, 1, 2)}
    assert np.allclose(g[2] - g[0], 2 * (g[1] - g[0]), rtol=1e-12, atol=0)


# output-layer initialisation


def test_init_output_layer_is_restricted_minimiser(rows, lip):
    cfg = TrainingConfig(lip, 0.01)
    hidden = init_hidden_random([4, 16], 5)
    m = init_output_layer(hidden, rows, cfg)
    sys_ = output_layer_system(hidden, rows, cfg)
    x = np.concatenate([m.nn.output.W[0], m.nn.output.B, m.theta_phy])
    g = sys_.restricted_cost_gradient(x)
    assert np.linalg.norm(g) <= 1e-8 * 2 * (np.linalg.norm(sys_.M_R @ x) + np.linalg.norm(sys_.rhs))
    np.testing.assert_array_equal(m.nn.hidden[0].W, hidden.hidden[0].W)


def test_huge_regularization_pins_the_physical_layer(rows, lip):
    cfg = TrainingConfig(lip, 1e12)
    hidden = init_hidden_random([4, 16], 6)
    m = init_output_layer(hidden, rows, cfg)
    np.testing.assert_allclose(m.theta_phy[:3], lip.theta[:3], rtol=1e-4)
    # oracle: sequential least squares of the hidden features on the LIP residual
    seq = initial_model(rows, replace(cfg, mode="sequential", seed=6))
    np.testing.assert_allclose(predict_rows(m, rows), predict_rows(seq, rows), rtol=1e-4,
                               atol=1e-4 * np.abs(rows.u).max())


def test_zero_hidden_layer_is_singular(rows, lip):
    hidden = init_hidden_random([4, 8], 0, scale=0.0)
    with pytest.raises(SingularMatrixError):
        init_output_layer(hidden, rows, TrainingConfig(lip, 0.01))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_init_never_worse_than_lip(seed):
    from conftest import random_clm_dataset

    rng = np.random.default_rng(seed)
    d = random_clm_dataset(rng, 600)
    r = make_rows(d, BasisMap("clm", 1e-4), CLM_SPEC)
    lip = LipParams(fit_lip_rows(r.T, r.u))
    cfg = TrainingConfig(lip, 0.01, seed=seed % 1000)
    m = initial_model(r, cfg)
    v_init = regularized_cost(m, r, cfg).total
    v_lip = mse_cost(lip, r)
    strict, _ = strict_improvement_condition(m.nn, r, cfg)
    assert v_init <= v_lip * (1 + 1e-12)
    if strict:
        assert v_init < v_lip


def test_strict_condition_false_on_lip_data(rows, lip):
    perfect = Rows(rows.T, rows.X, rows.T @ lip.theta)
    cfg = TrainingConfig(lip, 0.01)
    hidden = init_hidden_random([4, 16], 1)
    strict, norm = strict_improvement_condition(hidden, perfect, cfg)
    assert not strict
    m = init_output_layer(hidden, perfect, cfg)
    v_lip = mse_cost(lip, perfect)
    assert abs(regularized_cost(m, perfect, cfg).total - v_lip) <= 1e-10 * max(np.mean(perfect.u**2), 1.0)


def test_strict_condition_true_on_plant_data(rows, lip):
    strict, norm = strict_improvement_condition(init_hidden_random([4, 16], 2), rows, TrainingConfig(lip, 0.01))
    assert strict and norm > 0


# training loop


def test_max_iter_validation(lip):
    with pytest.raises(ValueError):
        TrainingConfig(lip, max_iter=0)


def test_single_iteration_returns_initialisation(rows, lip):
    cfg = TrainingConfig(lip, 0.01, max_iter=1, seed=4)
    m, h = train_rows(rows, cfg)
    assert np.array_equal(flatten_pgnn(m), flatten_pgnn(initial_model(rows, cfg)))
    assert len(h) == 1 and h.best_iteration == 0


@pytest.mark.parametrize("mode", ["regularized", "unregularized", "sequential", "pinn_baseline"])
def test_training_chain_and_determinism(rows, lip, mode):
    cfg = TrainingConfig(lip, 0.0 if mode == "unregularized" else 0.01, mode=mode, max_iter=60,
                         step_size=1e-2, seed=7)
    m, h = train_rows(rows, cfg)
    m2, h2 = train_rows(rows, cfg)
    assert np.array_equal(h.total_cost, h2.total_cost) and np.array_equal(flatten_pgnn(m), flatten_pgnn(m2))
    assert h.total_cost[h.best_iteration] == h.total_cost.min()
    assert h.total_cost[h.best_iteration] <= h.total_cost[0]
    assert np.array_equal(h.theta_phy[h.best_iteration], m.theta_phy)
    if mode in ("regularized", "unregularized"):
        assert h.total_cost[0] <= mse_cost(lip, rows)
    if mode in ("sequential", "pinn_baseline"):
        assert np.all(h.theta_phy == lip.theta)
    if mode == "pinn_baseline":
        assert m.nn_only


def test_divergence_is_reported(rows, lip):
    cfg = TrainingConfig(lip, 0.01, max_iter=20, step_size=1e200, seed=1)
    with pytest.raises(DivergenceError):
        train_rows(rows, cfg)


def test_tolerance_stops_early(rows, lip):
    cfg = TrainingConfig(lip, 0.01, max_iter=50, tol=1e300, seed=1)
    _, h = train_rows(rows, cfg)
    assert len(h) == 1
