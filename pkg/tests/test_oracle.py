import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netsnipe import estimators as est
from netsnipe import oracle
from netsnipe.graph import Graph
from netsnipe.moments import Design
from netsnipe.outcome_model import InteractionModel, evaluate_potential, true_tte


def brute_moments(inst, theta):
    """Mean and variance by a plain loop over all assignments."""
    n = inst.n
    vals, probs = [], []
    for bits in range(1 << n):
        z = np.array([(bits >> k) & 1 for k in range(n)], dtype=float)
        ds = est.Dataset(z, evaluate_potential(inst.model, z), inst.x, inst.model.graph,
                         inst.design, inst.model.beta)
        vals.append(est.estimate_tte_theta(ds, theta).point_estimate)
        probs.append(np.prod(np.where(z == 1, inst.design.p, 1 - inst.design.p)))
    vals, probs = np.array(vals), np.array(probs)
    m = probs @ vals
    return m, probs @ (vals - m) ** 2


@given(st.integers(0, 10_000), st.integers(1, 2))
@settings(max_examples=15, deadline=None)
def test_component_factorization_matches_brute_force(seed, beta):
    rng = np.random.default_rng(seed)
    inst = oracle.random_instance(rng, int(rng.integers(2, 7)), beta, edge_prob=0.15)
    theta = rng.normal(size=2)
    got = oracle.exact_fixed_theta(inst.model, inst.x, inst.design, theta)
    m, v = brute_moments(inst, theta)
    assert got.mean == pytest.approx(m, rel=1e-10, abs=1e-12)
    assert got.variance == pytest.approx(v, rel=1e-10, abs=1e-12)
    assert got.mean == pytest.approx(true_tte(inst.model), rel=1e-10, abs=1e-12)


def test_expectation_of_constant_is_one():
    d = Design(np.array([0.2, 0.7, 0.4]))
    assert oracle.expectation(lambda z: np.ones(z.shape[0]), d) == pytest.approx(1.0)


def test_budget_enforced():
    with pytest.raises(oracle.BudgetError):
        list(oracle.assignment_blocks(np.arange(23), 23, Design.uniform(23, 0.5)))
    with pytest.raises(oracle.BudgetError):
        oracle.run_validation(budget_n=23)


def test_toy_golden_values():
    rows = oracle.toy_golden()
    assert len(rows) == 12 and all(r.passed for r in rows)


def test_toy_variance_formula_any_theta():
    inst = oracle.toy_instance()
    for th in (-1.0, 0.5, 3.0):
        v = oracle.exact_fixed_theta(inst.model, inst.x, inst.design, [th]).variance
        assert v == pytest.approx(16 / 9 + th ** 2 / 3, rel=1e-12)


def test_block_comparison_small():
    c = oracle.toy_block_comparison(5, alternatives=5)
    assert c.passed
    assert c.theta_reg == pytest.approx(4 / 3) and c.theta_vim == pytest.approx(0.0, abs=1e-12)


def test_dm_exact_moments_report_excluded_mass():
    g = Graph.self_loops(3)
    model = InteractionModel(g, 1, {(i, (i,)): 1.0 for i in range(3)})
    res = oracle.exact_moments(model, np.array([[1.0], [0.0], [-1.0]]), Design.uniform(3, 0.5), "DM")
    assert res.excluded_mass == pytest.approx(0.25)
    assert res.mean == pytest.approx(1.0) and res.variance == pytest.approx(0.0, abs=1e-14)


def test_closed_form_gap_exact_diagonal_any_theta():
    rng = np.random.default_rng(4)
    for _ in range(5):
        inst = oracle.random_instance(rng, 6, 1, equal_p=True)
        theta = rng.normal(size=2)
        want = (oracle.exact_fixed_theta(inst.model, inst.x, inst.design).variance
                - oracle.exact_fixed_theta(inst.model, inst.x, inst.design, theta).variance)
        got = oracle.closed_form_variance_gap(inst.model, inst.x, inst.design, theta,
                                              exact_diagonal=True)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_closed_form_gap_preconditions():
    rng = np.random.default_rng(0)
    inst = oracle.random_instance(rng, 4, 2, equal_p=True)
    with pytest.raises(ValueError):
        oracle.closed_form_variance_gap(inst.model, inst.x, inst.design, [0, 0])
    inst = oracle.random_instance(rng, 4, 1)
    with pytest.raises(ValueError):
        oracle.closed_form_variance_gap(inst.model, inst.x, inst.design, [0, 0])


def test_population_theta_vim_minimizes_variance():
    rng = np.random.default_rng(9)
    inst = oracle.random_instance(rng, 6, 2)
    th = oracle.population_theta_vim(inst.model, inst.x, inst.design)
    best = oracle.exact_fixed_theta(inst.model, inst.x, inst.design, th).variance
    for _ in range(10):
        alt = th + rng.normal(scale=0.3, size=th.size)
        assert oracle.exact_fixed_theta(inst.model, inst.x, inst.design, alt).variance >= best - 1e-12


@given(st.floats(0, 10))
def test_variance_bound_monotone_in_theta_norm(scale):
    inst = oracle.toy_instance()
    lo = oracle.variance_bound(inst.model, inst.x, inst.design, [scale])
    hi = oracle.variance_bound(inst.model, inst.x, inst.design, [scale + 1])
    assert hi >= lo


def test_toy_variance_below_bound():
    inst = oracle.toy_instance()
    var = oracle.exact_fixed_theta(inst.model, inst.x, inst.design).variance
    assert var <= oracle.variance_bound(inst.model, inst.x, inst.design)


def test_quick_validation_all_pass():
    results = oracle.run_validation(budget_n=6, instance_count=8, seed=3)
    assert [r.name for r in results if not r.passed] == []


def test_check_result_line_format():
    r = oracle.CheckResult("x", False, 1e-3, 4, "bad")
    assert r.line().startswith("[FAIL] x: 4 checks")
