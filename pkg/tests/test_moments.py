import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netsnipe.graph import Graph, local_patterns
from netsnipe.moments import (_local_kernel_general, Design, DesignError, KernelCache, MomentSpec, bernoulli_moment,
                              covariance_bound, expect_product, g_coeff, g_rows, local_kernel,
                              pair_gram, vim_kernel, weighted_moment)
from netsnipe.oracle import expectation

probs = st.floats(0.05, 0.95)


def test_design_validation():
    with pytest.raises(DesignError):
        Design(np.array([0.0, 0.5]))
    with pytest.raises(DesignError):
        Design(np.array([0.5]), floor=0.6)
    with pytest.raises(DesignError):
        Design(np.array([0.1, 0.5]), floor=0.2)
    d = Design(np.array([0.3, 0.6]))
    assert d.floor == pytest.approx(0.3) and not d.is_uniform


def test_g_coeff_values():
    d = Design(np.array([0.5, 0.2, 0.7]))
    assert g_coeff([], d) == 0.0
    assert g_coeff([0], d) == pytest.approx(1.0)
    assert g_coeff([1, 2], d) == pytest.approx(0.8 * 0.3 - 0.14)


@given(st.lists(probs, min_size=1, max_size=6))
def test_g_bounded_by_one(ps):
    d = Design(np.array(ps))
    for k in range(len(ps) + 1):
        for s in itertools.combinations(range(len(ps)), k):
            assert abs(g_coeff(s, d)) <= 1 + 1e-12


@given(st.lists(probs, min_size=3, max_size=6), st.integers(0, 1000))
def test_g_rows_matches_scalar(ps, seed):
    d = Design(np.array(ps))
    rng = np.random.default_rng(seed)
    members = np.full((10, 3), -1)
    for r in range(10):
        k = rng.integers(0, 4)
        members[r, :k] = rng.choice(len(ps), size=k, replace=False)
    want = [g_coeff([j for j in m if j >= 0], d) for m in members]
    assert np.allclose(g_rows(members, d.p), want, atol=1e-15)


@given(st.integers(0, 5), st.integers(0, 1), probs)
def test_bernoulli_moment_matches_sum(a, b, p):
    v = p * (1 - p)
    want = p * ((1 - p) / v) ** a + (0 if b else (1 - p) * (-p / v) ** a)
    assert bernoulli_moment(a, b, p) == pytest.approx(want)


def test_weight_first_and_second_moment():
    for p in (0.1, 0.5, 0.8):
        assert bernoulli_moment(1, 0, p) == pytest.approx(0.0, abs=1e-12)
        assert bernoulli_moment(2, 0, p) == pytest.approx(1 / (p * (1 - p)))
        assert bernoulli_moment(1, 1, p) == pytest.approx(1.0)


def test_moment_spec_rejects_zero_exponent():
    with pytest.raises(ValueError):
        MomentSpec({0: 0})


def test_expect_product_factorizes():
    d = Design(np.array([0.3, 0.6, 0.5]))
    spec = MomentSpec({0: 2, 1: 1}, {1, 2})
    want = bernoulli_moment(2, 0, 0.3) * bernoulli_moment(1, 1, 0.6) * 0.5
    assert expect_product(spec, d) == pytest.approx(want)


def small_graph(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    lists = [rng.choice(n, size=rng.integers(0, n), replace=False).tolist() for _ in range(n)]
    return Graph.from_lists(lists), Design(rng.uniform(0.2, 0.8, size=n)), n


def enum_omega(g, d, beta):
    from netsnipe import estimators as est
    from netsnipe.graph import subset_table
    table = subset_table(g, beta)
    return lambda z: est.weights_batch(table, d.p, z)


@given(st.integers(0, 10_000), st.integers(1, 2))
@settings(max_examples=25, deadline=None)
def test_pair_gram_equals_double_sum_and_enumeration(seed, beta):
    g, d, n = small_graph(seed)
    om = enum_omega(g, d, beta)
    gram = expectation(lambda z: np.einsum("mi,mj->mij", om(z), om(z)), d)
    for i in range(n):
        for j in range(n):
            a = pair_gram(g, d, beta, i, j)
            assert a == pytest.approx(weighted_moment(g, d, beta, i, j), abs=1e-10, rel=1e-10)
            assert a == pytest.approx(gram[i, j], abs=1e-10, rel=1e-10)


@given(st.integers(0, 10_000), st.integers(1, 2))
@settings(max_examples=25, deadline=None)
def test_local_kernel_matches_vim_kernel(seed, beta):
    g, d, n = small_graph(seed)
    for i in range(n):
        nb = g.neighbors(i)
        pats = local_patterns(nb.size, beta)
        k = local_kernel(pats, d.p[nb])
        # K[T, S] = E[omega_i W_T Z_S]; compare against E[omega_i omega_i Z_S] summed with g(T)
        for c, s in enumerate(pats):
            s_glob = [int(nb[j]) for j in s]
            want = vim_kernel(g, d, beta, i, i, s_glob)
            gt = np.array([g_coeff([int(nb[j]) for j in t], d) for t in pats])
            assert gt @ k[:, c] == pytest.approx(want, abs=1e-10, rel=1e-10)


def test_kernel_cache_consistent():
    g, d, n = small_graph(3)
    cache = KernelCache(g, d, 1)
    s = tuple(int(j) for j in g.neighbors(0)[:1])
    assert cache(0, 0, s) == cache(0, 0, s) == vim_kernel(g, d, 1, 0, 0, s)


def test_covariance_bound_support_rule():
    assert covariance_bound([0], [], [1], [], 0.3) == 0.0
    assert covariance_bound([0], [], [1], [0, 1], 0.3) == 1.0
    assert covariance_bound([0, 1], [], [0, 1], [], 0.5) == pytest.approx(16.0)


def test_omega_second_moment_single_unit():
    # E[omega^2] = 1 / (p (1 - p)) for one treated self-loop at beta = 1
    g = Graph.from_lists([[]])
    d = Design(np.array([0.3]))
    assert pair_gram(g, d, 1, 0, 0) == pytest.approx(1 / 0.21)
    assert math.isclose(weighted_moment(g, d, 1, 0, 0), 1 / 0.21)


@given(st.lists(probs, min_size=1, max_size=7))
def test_first_order_kernel_matches_general(ps):
    p = np.array(ps)
    pats = local_patterns(p.size, 1)
    assert np.allclose(local_kernel(pats, p), _local_kernel_general(pats, p), rtol=1e-12)
