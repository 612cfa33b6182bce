import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netsnipe import estimators as est
from netsnipe.graph import Graph, gen_erdos_renyi
from netsnipe.moments import Design, g_coeff
from netsnipe.oracle import random_instance, toy_instance
from netsnipe.outcome_model import evaluate_potential


def dataset(inst, z):
    return est.Dataset(z, evaluate_potential(inst.model, z), inst.x, inst.model.graph,
                       inst.design, inst.model.beta)


def literal_omega(ds):
    from netsnipe.graph import neighbor_subsets
    p = ds.design.p
    w = (ds.z - p) / (p * (1 - p))
    return np.array([sum(g_coeff(s, ds.design) * np.prod(w[list(s)])
                         for s in neighbor_subsets(ds.graph, i, ds.beta) if s)
                     for i in range(ds.n)])


@given(st.integers(0, 10_000), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_weights_match_literal_sum(seed, beta):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(2, 8)), beta)
    ds = dataset(inst, (rng.random(inst.n) < 0.5).astype(float))
    assert np.allclose(est.snipe_weights(ds), literal_omega(ds))


@given(st.integers(0, 10_000), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_alpha_hat_batch_matches_literal(seed, beta):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(2, 7)), beta)
    ds = dataset(inst, (rng.random(inst.n) < 0.5).astype(float))
    t = ds.table
    fast = est.alpha_hat_batch(t, ds.design.p, ds.z, ds.y)
    slow = [est.alpha_hat(ds, int(i), [j for j in m if j >= 0]) for i, m in zip(t.unit, t.members)]
    assert np.allclose(fast, slow, rtol=1e-10, atol=1e-10)


def test_toy_snipe_value():
    inst = toy_instance()
    ds = dataset(inst, np.array([1.0, 1.0, 0.0]))
    assert np.allclose(est.snipe_weights(ds), [4, 4, -2])
    assert est.snipe_estimate(ds).point_estimate == pytest.approx(3.0)


def test_toy_support_closed_form():
    inst = toy_instance()
    for bits in range(8):
        z = np.array([(bits >> k) & 1 for k in range(3)], dtype=float)
        want = 4 / 3 * (2 * (z[0] + z[1] - 1) ** 2 + (z[2] - 0.5) ** 2)
        assert est.snipe_estimate(dataset(inst, z)).point_estimate == pytest.approx(want)


@given(st.integers(0, 10_000), st.integers(1, 2))
@settings(max_examples=20, deadline=None)
def test_vim_fast_equals_reference(seed, beta):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(3, 8)), beta)
    ds = dataset(inst, (rng.random(inst.n) < 0.5).astype(float))
    g1, b1 = est.vim_system(ds)
    g2, b2 = est.vim_system_reference(ds)
    assert np.allclose(g1, g2, rtol=1e-10, atol=1e-12)
    assert np.allclose(b1, b2, rtol=1e-10, atol=1e-12)


def test_reg_theta_is_weighted_least_squares():
    rng = np.random.default_rng(3)
    inst = random_instance(rng, 8, 1)
    ds = dataset(inst, (rng.random(8) < 0.5).astype(float))
    w = est.snipe_weights(ds) ** 2
    x = ds.x
    want = np.linalg.lstsq(x * np.sqrt(w)[:, None], ds.y * np.sqrt(w), rcond=None)[0]
    assert np.allclose(est.theta_reg(ds), want)


def test_fixed_theta_estimate_linear_in_theta():
    rng = np.random.default_rng(8)
    inst = random_instance(rng, 7, 2)
    ds = dataset(inst, (rng.random(7) < 0.5).astype(float))
    t1, t2 = rng.normal(size=2), rng.normal(size=2)
    f = lambda t: est.estimate_tte_theta(ds, t).point_estimate
    assert f(t1 + t2) - f(t2) == pytest.approx(f(t1) - f(np.zeros(2)))


def test_dm_and_lin_under_sutva():
    rng = np.random.default_rng(0)
    n = 400
    x = rng.normal(size=(n, 2))
    z = (rng.random(n) < 0.5).astype(float)
    y = 1.0 + 2.0 * z + x @ np.array([1.0, -1.0])
    ds = est.Dataset(z, y, x, Graph.self_loops(n), Design.uniform(n, 0.5))
    assert est.lin_estimate(ds).point_estimate == pytest.approx(2.0)
    assert est.theta_lin(ds) == pytest.approx([1.0, -1.0])
    assert est.dm_estimate(ds).point_estimate == pytest.approx(
        y[z == 1].mean() - y[z == 0].mean())


def test_empty_arm_is_an_estimation_error():
    ds = est.Dataset(np.ones(4), np.arange(4.0), np.arange(4.0), Graph.self_loops(4),
                     Design.uniform(4, 0.5))
    with pytest.raises(est.EstimationError):
        est.dm_estimate(ds)
    with pytest.raises(est.EstimationError):
        est.lin_estimate(ds)


def test_zero_gram_raises():
    ds = est.Dataset(np.array([1.0, 0.0]), np.ones(2), np.zeros(2), Graph.self_loops(2),
                     Design.uniform(2, 0.5))
    with pytest.raises(est.EstimationError):
        est.theta_reg(ds)


def test_dataset_validation():
    g = Graph.self_loops(3)
    d = Design.uniform(3, 0.5)
    with pytest.raises(ValueError):
        est.Dataset(np.array([0, 1, 2.0]), np.zeros(3), np.zeros(3), g, d)
    with pytest.raises(ValueError):
        est.Dataset(np.zeros(2), np.zeros(3), np.zeros(3), g, d)
    with pytest.raises(ValueError):
        est.Dataset(np.zeros(3), np.array([0, np.nan, 0]), np.zeros(3), g, d)


def test_dataset_centers_covariates():
    ds = est.Dataset(np.array([0, 1, 0.0]), np.zeros(3), np.array([1.0, 2.0, 6.0]),
                     Graph.self_loops(3), Design.uniform(3, 0.5))
    assert ds.x.mean() == pytest.approx(0.0)


def test_resolve_estimator_aliases():
    assert est.resolve_estimator("vim") == "VIM-SNIPE"
    assert est.resolve_estimator("Reg-SNIPE") == "Reg-SNIPE"
    assert est.resolve_estimator("dm") == "DM"
    with pytest.raises(KeyError):
        est.resolve_estimator("ols")


def test_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    inst = random_instance(rng, 6, 1)
    ds = dataset(inst, (rng.random(6) < 0.5).astype(float))
    est.write_dataset(ds, tmp_path / "d.csv")
    back = est.read_dataset(tmp_path / "d.csv", ds.graph, 1)
    assert np.array_equal(back.z, ds.z) and np.array_equal(back.y, ds.y)
    assert np.allclose(back.x, ds.x) and np.array_equal(back.design.p, ds.design.p)
    est.write_dataset(ds, tmp_path / "e.csv", with_p=False)
    with pytest.raises(ValueError):
        est.read_dataset(tmp_path / "e.csv", ds.graph, 1)


def test_all_estimators_finite_on_moderate_graph():
    rng = np.random.default_rng(11)
    n = 300
    g = gen_erdos_renyi(n, 5 / n, rng)
    x = rng.normal(size=(n, 3))
    z = (rng.random(n) < 0.5).astype(float)
    y = rng.normal(size=n) + z
    ds = est.Dataset(z, y, x, g, Design.uniform(n, 0.5))
    for name, f in est.ESTIMATORS.items():
        assert np.isfinite(f(ds).point_estimate), name
