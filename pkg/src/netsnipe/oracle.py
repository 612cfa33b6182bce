"""Exact finite-population quantities by enumerating every treatment assignment.

Fixed-coefficient estimators are sums over weakly connected components, each a
function of that component's treatments only, so their moments are enumerated
component by component. Estimators whose coefficient is fitted from the data
are enumerated over the whole population.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import estimators as est
from .graph import Graph, gen_erdos_renyi, max_degrees, neighbor_subsets, subset_table
from .moments import (Design, covariance_bound, pair_gram, vim_kernel, weighted_moment)
from .outcome_model import InteractionModel, evaluate_potential, true_tte

MAX_ENUM_N = 22
BLOCK = 1 << 15
RTOL, ATOL = 1e-10, 1e-12


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class ExactMoments:
    mean: float
    variance: float
    support_size: int
    excluded_mass: float = 0.0

    def __post_init__(self):
        if self.variance < 0:
            object.__setattr__(self, "variance", 0.0)


def close(a, b, rtol: float = RTOL, atol: float = ATOL) -> bool:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return bool(np.all(np.abs(a - b) <= atol + rtol * np.maximum(np.abs(a), np.abs(b))))


def _check_budget(k: int) -> None:
    if k > MAX_ENUM_N:
        raise BudgetError(f"enumeration over {k} units exceeds the budget of {MAX_ENUM_N}")


def assignment_blocks(cols: np.ndarray, n: int, design: Design,
                      block: int = BLOCK) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(Z, prob)`` covering all assignments of the units ``cols``.

    Units outside ``cols`` are held at 0 and carry no probability weight.
    """
    cols = np.asarray(cols, dtype=np.int64)
    _check_budget(cols.size)
    total = 1 << cols.size
    p = design.p[cols]
    bits = np.arange(cols.size)
    for lo in range(0, total, block):
        codes = np.arange(lo, min(total, lo + block), dtype=np.int64)
        sub = ((codes[:, None] >> bits) & 1).astype(np.float64)
        prob = np.where(sub == 1, p, 1 - p).prod(axis=1)
        z = np.zeros((codes.size, n))
        z[:, cols] = sub
        yield z, prob


def expectation(func: Callable[[np.ndarray], np.ndarray], design: Design,
                cols: np.ndarray | None = None) -> np.ndarray:
    """``E[func(Z)]`` where ``func`` maps a batch ``(m, n)`` to ``(m, ...)``."""
    n = design.n
    cols = np.arange(n) if cols is None else cols
    acc = None
    for z, prob in assignment_blocks(cols, n, design):
        val = np.tensordot(prob, func(z), axes=(0, 0))
        acc = val if acc is None else acc + val
    return acc


def _centered(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    x = x[:, None] if x.ndim == 1 else x
    return x - x.mean(axis=0)


def _component_sums(model: InteractionModel, x: np.ndarray, design: Design,
                    theta: np.ndarray, per_unit: bool = False):
    """Per-component (mean, variance) of ``sum_{i in c} omega_i (Y_i - theta^T X_i)``."""
    g = model.graph
    table = subset_table(g, model.beta)
    resid_x = x @ theta
    ncomp, labels = g.components()
    out = []
    for c in range(ncomp):
        cols = np.flatnonzero(labels == c)
        s1 = s2 = 0.0
        for z, prob in assignment_blocks(cols, g.n, design):
            omega = est.weights_batch(table, design.p, z)[:, cols]
            y = evaluate_potential(model, z)[:, cols]
            tot = (omega * (y - resid_x[cols])).sum(axis=1)
            s1 += float(prob @ tot)
            s2 += float(prob @ tot ** 2)
        out.append((s1, s2 - s1 * s1))
    return out


def exact_fixed_theta(model: InteractionModel, x, design: Design, theta=None) -> ExactMoments:
    """Exact law of ``(1/n) sum omega_i (Y_i - theta^T X_i)`` for a fixed ``theta``."""
    x = _centered(x)
    theta = np.zeros(x.shape[1]) if theta is None else np.asarray(theta, dtype=float).ravel()
    parts = _component_sums(model, x, design, theta)
    n = model.n
    mean = math.fsum(m for m, _ in parts) / n
    var = math.fsum(v for _, v in parts) / n ** 2
    return ExactMoments(mean, var, 1 << n if n < 63 else -1)


def exact_moments(model: InteractionModel, x, design: Design, estimator: str = "SNIPE",
                  theta=None) -> ExactMoments:
    """Exact mean and variance of a named estimator, or of ``theta`` adjustment.

    ``estimator="theta"`` (or passing ``theta``) selects the fixed-coefficient
    estimator. Data-fitted estimators are recomputed on every assignment;
    assignments where they are undefined are dropped and their probability
    reported in ``excluded_mass``.
    """
    if theta is not None or estimator in ("theta", "SNIPE"):
        return exact_fixed_theta(model, x, design, theta)
    name = est.resolve_estimator(estimator)
    func = est.ESTIMATORS[name]
    n = model.n
    _check_budget(n)
    x = _centered(x)
    vals, probs, dropped = [], [], 0.0
    for z, prob in assignment_blocks(np.arange(n), n, design):
        ys = evaluate_potential(model, z)
        for zz, yy, pp in zip(z, ys, prob):
            try:
                vals.append(func(est.Dataset(zz, yy, x, model.graph, design, model.beta)).point_estimate)
                probs.append(pp)
            except est.EstimationError:
                dropped += pp
    vals, probs = np.array(vals), np.array(probs)
    if probs.sum() <= 0:
        raise est.EstimationError(f"{name} is undefined on every assignment")
    w = probs / probs.sum()
    mean = float(w @ vals)
    return ExactMoments(mean, float(w @ (vals - mean) ** 2), vals.size, float(dropped))


def variance_split(model: InteractionModel, x, design: Design, theta=None) -> tuple[float, float]:
    """Split ``Var(TTE(theta))`` into the sum of per-unit variances and the cross covariances."""
    x = _centered(x)
    theta = np.zeros(x.shape[1]) if theta is None else np.asarray(theta, dtype=float).ravel()
    n = model.n
    _check_budget(n)
    table = subset_table(model.graph, model.beta)
    rx = x @ theta

    def terms(z):
        omega = est.weights_batch(table, design.p, z)
        return omega * (evaluate_potential(model, z) - rx) / n

    m1 = expectation(terms, design)
    m2 = expectation(lambda z: np.einsum("mi,mj->mij", terms(z), terms(z)), design)
    cov = m2 - np.outer(m1, m1)
    v_var = float(np.trace(cov))
    return v_var, float(cov.sum() - v_var)


# -- analytic quantities from the moments engine -------------------------------

def _coef_items(model: InteractionModel, i: int):
    return [(s, model.coef(i, s)) for s in neighbor_subsets(model.graph, i, model.beta)]


def variance_decomposition(model: InteractionModel, x, design: Design, theta) -> tuple[float, float]:
    """``(alpha part, theta part)`` of ``Var(TTE(theta))``; the first does not depend on theta."""
    x = _centered(x)
    theta = np.asarray(theta, dtype=float).ravel()
    g, beta, n = model.graph, model.beta, model.n
    tx = x @ theta
    second = 0.0
    for i in range(n):
        items_i = [(s, a) for s, a in _coef_items(model, i) if a != 0.0]
        for i2 in range(n):
            items_2 = [(s, a) for s, a in _coef_items(model, i2) if a != 0.0]
            for s, a in items_i:
                for s2, a2 in items_2:
                    second += a * a2 * weighted_moment(g, design, beta, i, i2, set(s) | set(s2))
    alpha_part = second / n ** 2 - true_tte(model) ** 2

    quad = cross = 0.0
    for i in range(n):
        for i2 in g.overlapping_partners(i):
            i2 = int(i2)
            quad += pair_gram(g, design, beta, i, i2) * tx[i] * tx[i2]
            for s, a in _coef_items(model, i):
                if a != 0.0:
                    cross += a * vim_kernel(g, design, beta, i, i2, s) * tx[i2]
    return alpha_part, (quad - 2 * cross) / n ** 2


def _omega_sq_y(model: InteractionModel, design: Design, i: int) -> float:
    """``E[omega_i^2 Y_i]``."""
    return sum(a * vim_kernel(model.graph, design, model.beta, i, i, s)
               for s, a in _coef_items(model, i) if a != 0.0)


def population_theta_reg(model: InteractionModel, x, design: Design) -> np.ndarray:
    """``theta`` solving the population weighted normal equations with weights ``E[omega_i^2]``."""
    x = _centered(x)
    g, beta = model.graph, model.beta
    gram = np.zeros((x.shape[1],) * 2)
    rhs = np.zeros(x.shape[1])
    for i in range(model.n):
        gram += pair_gram(g, design, beta, i, i) * np.outer(x[i], x[i])
        rhs += _omega_sq_y(model, design, i) * x[i]
    return np.linalg.solve(gram, rhs)


def population_vim_system(model: InteractionModel, x, design: Design):
    x = _centered(x)
    g, beta, n = model.graph, model.beta, model.n
    gram = np.zeros((x.shape[1],) * 2)
    rhs = np.zeros(x.shape[1])
    for i in range(n):
        items = [(s, a) for s, a in _coef_items(model, i) if a != 0.0]
        for i2 in g.overlapping_partners(i):
            i2 = int(i2)
            gram += pair_gram(g, design, beta, i, i2) * np.outer(x[i], x[i2])
            rhs += sum(a * vim_kernel(g, design, beta, i, i2, s) for s, a in items) * x[i2]
    return gram / n ** 2, rhs / n ** 2


def population_theta_vim(model: InteractionModel, x, design: Design) -> np.ndarray:
    """Minimizer of ``Var(TTE(theta))`` over fixed ``theta``."""
    gram, rhs = population_vim_system(model, x, design)
    return np.linalg.solve(gram, rhs)


def closed_form_variance_gap(model: InteractionModel, x, design: Design, theta,
                             exact_diagonal: bool = False) -> float:
    """``Var(TTE(0)) - Var(TTE(theta))`` for first-order models under a uniform design.

    The plain form drops ``2 theta^T sum_i E[omega_i^2 (Y_i - theta^T X_i)] X_i / n^2``,
    which vanishes at the population weighted-least-squares ``theta``; with
    ``exact_diagonal=True`` that term is restored and the result holds for
    every ``theta``.
    """
    if model.beta != 1:
        raise ValueError("closed-form gap needs a first-order model (beta = 1)")
    if not design.is_uniform:
        raise ValueError("closed-form gap needs equal treatment probabilities")
    x = _centered(x)
    theta = np.asarray(theta, dtype=float).ravel()
    g, n = model.graph, model.n
    p = float(design.p[0])
    v = p * (1 - p)
    tx = x @ theta
    nbrs = [set(g.neighbors(i).tolist()) for i in range(n)]
    total = 0.0
    for i in range(n):
        a0 = model.coef(i, ())
        lin = {j: model.coef(i, (j,)) for j in nbrs[i]}
        shift = 2 * (a0 + p * sum(lin.values()))
        total += len(nbrs[i]) * tx[i] ** 2
        for i2 in g.overlapping_partners(i):
            i2 = int(i2)
            if i2 == i:
                continue
            total += tx[i2] * sum(2 * (1 - 2 * p) * lin[j] + shift - tx[i]
                                  for j in nbrs[i] & nbrs[i2])
        if exact_diagonal:
            ey = (len(nbrs[i]) * (a0 + p * sum(lin.values())) + (1 - 2 * p) * sum(lin.values())) / v
            total += 2 * v * tx[i] * (ey - len(nbrs[i]) / v * tx[i])
    return total / (v * n ** 2)


def variance_bound(model: InteractionModel, x, design: Design, theta=None) -> float:
    """Degree-based upper bound on ``Var(TTE(theta))``."""
    x = _centered(x)
    theta = np.zeros(x.shape[1]) if theta is None else np.asarray(theta, dtype=float).ravel()
    d_in, d_out = max_degrees(model.graph)
    beta, p = model.beta, design.floor
    x_max = float(np.abs(x).sum(axis=1).max())
    scale = model.y_max() + float(np.linalg.norm(theta)) * x_max
    growth = (math.e * d_in / beta * max(4 * beta ** 2, 1 / (p * (1 - p)))) ** beta
    return 4 * d_in * d_out * scale ** 2 / model.n * growth


def omega_sq_bounds(g: Graph, design: Design, beta: int) -> tuple[float, float]:
    """Lower and upper bounds on every ``E[omega_i^2]``."""
    d_in, _ = max_degrees(g)
    p = design.floor
    return 4.0, (math.e * d_in / (beta * p * (1 - p))) ** beta


# -- instances -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Instance:
    model: InteractionModel
    x: np.ndarray
    design: Design

    @property
    def n(self) -> int:
        return self.model.n


def random_instance(rng: np.random.Generator, n: int, beta: int, p_range=(0.2, 0.8),
                    equal_p: bool = False, edge_prob: float = 0.35, d_x: int = 2) -> Instance:
    """Random graph, design, coefficients and centered covariates for oracle sweeps."""
    g = gen_erdos_renyi(n, edge_prob, rng)
    if equal_p:
        design = Design.uniform(n, rng.uniform(*p_range))
    else:
        design = Design(rng.uniform(*p_range, size=n))
    alpha = rng.normal(size=subset_table(g, beta).unit.size)
    model = InteractionModel.from_rows(g, beta, alpha)
    x = rng.normal(size=(n, d_x))
    return Instance(model, x - x.mean(axis=0), design)


def toy_instance() -> Instance:
    """Three units: the first two share both treatments, the third stands alone."""
    g = Graph.from_lists([[0, 1], [0, 1], [2]])
    coefs = {(0, (0,)): 1.0, (0, (1,)): 1.0,
             (1, ()): -2.0, (1, (0,)): 1.0, (1, (1,)): 1.0,
             (2, ()): -0.5, (2, (2,)): 1.0}
    x = np.array([[0.5], [0.0], [-0.5]])
    return Instance(InteractionModel(g, 1, coefs), x, Design.uniform(3, 0.5))


def toy_blocks(m: int) -> Instance:
    """``m`` disjoint copies of :func:`toy_instance`."""
    base = toy_instance()
    lists, coefs = [], {}
    for b in range(m):
        off = 3 * b
        lists.extend([[off, off + 1], [off, off + 1], [off + 2]])
        for (i, s), a in base.model.coefficients.items():
            coefs[(i + off, tuple(j + off for j in s))] = a
    g = Graph.from_lists(lists)
    x = np.tile(base.x, (m, 1))
    return Instance(InteractionModel(g, 1, coefs), x, Design.uniform(3 * m, 0.5))


# -- property sweeps -------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    n_checked: int
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.name}: {self.n_checked} checks, "
                f"max error {self.max_error:.3e}" + (f" ({self.detail})" if self.detail else ""))


class _Tracker:
    def __init__(self, name: str):
        self.name, self.err, self.count, self.ok, self.notes = name, 0.0, 0, True, []

    def compare(self, got, want, what: str = "") -> None:
        got, want = np.asarray(got, float), np.asarray(want, float)
        self.count += got.size
        err = float(np.max(np.abs(got - want))) if got.size else 0.0
        self.err = max(self.err, err)
        if not close(got, want):
            self.ok = False
            if len(self.notes) < 3:
                self.notes.append(f"{what} off by {err:.2e}")

    def require(self, cond: bool, what: str, err: float = 0.0) -> None:
        self.count += 1
        self.err = max(self.err, err)
        if not cond:
            self.ok = False
            if len(self.notes) < 3:
                self.notes.append(what)

    def result(self) -> CheckResult:
        return CheckResult(self.name, self.ok, self.err, self.count, "; ".join(self.notes))


def random_instances(seed: int, count: int, max_n: int, min_n: int = 3,
                     betas=(1, 2), equal_p: bool = False) -> list[Instance]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(min_n, max_n + 1))
        out.append(random_instance(rng, n, betas[k % len(betas)], equal_p=equal_p))
    return out


def check_unbiasedness(instances: list[Instance], thetas_per: int = 5, seed: int = 0) -> CheckResult:
    tr = _Tracker("unbiasedness")
    rng = np.random.default_rng(seed)
    for k, inst in enumerate(instances):
        model, design = inst.model, inst.design
        table = subset_table(model.graph, model.beta)
        thetas = np.vstack([np.zeros(inst.x.shape[1]),
                            rng.normal(scale=2.0, size=(thetas_per, inst.x.shape[1]))])

        def estimates(z):
            omega = est.weights_batch(table, design.p, z)
            y = evaluate_potential(model, z)
            return np.stack([(omega * (y - inst.x @ th)).mean(axis=1) for th in thetas], axis=1)

        tr.compare(expectation(estimates, design), np.full(len(thetas), true_tte(model)),
                   f"instance {k}")
    return tr.result()


def check_coefficient_estimates(instances: list[Instance]) -> CheckResult:
    tr = _Tracker("coefficient estimates")
    for k, inst in enumerate(instances):
        model, design = inst.model, inst.design
        table = subset_table(model.graph, model.beta)
        mean = expectation(lambda z: est.alpha_hat_batch(
            table, design.p, z, evaluate_potential(model, z)), design)
        tr.compare(mean, model.row_coefficients(), f"instance {k}")
    return tr.result()


def check_vim_expectation(instances: list[Instance]) -> CheckResult:
    """The fitted VIM cross-moment vector is unbiased for its population value."""
    tr = _Tracker("VIM cross-moment expectation")
    for k, inst in enumerate(instances):
        model, design = inst.model, inst.design

        def rhs(z):
            ys = evaluate_potential(model, z)
            return np.stack([est.vim_system(est.Dataset(zz, yy, inst.x, model.graph, design,
                                                        model.beta))[1] for zz, yy in zip(z, ys)])

        gram, want = population_vim_system(model, inst.x, design)
        got = expectation(rhs, design)
        tr.compare(got, want, f"instance {k}")
        tr.compare(np.linalg.solve(gram, got), np.linalg.solve(gram, want), f"instance {k} theta")
    return tr.result()


def check_variance_decomposition(instances: list[Instance], seed: int = 0) -> CheckResult:
    tr = _Tracker("variance decomposition")
    rng = np.random.default_rng(seed)
    for k, inst in enumerate(instances):
        theta = rng.normal(size=inst.x.shape[1])
        a, b = variance_decomposition(inst.model, inst.x, inst.design, theta)
        tr.compare(a + b, exact_fixed_theta(inst.model, inst.x, inst.design, theta).variance,
                   f"instance {k}")
    return tr.result()


def check_closed_form_gap(instances: list[Instance]) -> CheckResult:
    tr = _Tracker("closed-form variance gap")
    for k, inst in enumerate(instances):
        m, x, d = inst.model, inst.x, inst.design
        theta = population_theta_reg(m, x, d)
        want = exact_fixed_theta(m, x, d).variance - exact_fixed_theta(m, x, d, theta).variance
        tr.compare(closed_form_variance_gap(m, x, d, theta), want, f"instance {k}")
    return tr.result()


def check_variance_bound(instances: list[Instance], seed: int = 0) -> CheckResult:
    tr = _Tracker("variance upper bound")
    rng = np.random.default_rng(seed)
    for k, inst in enumerate(instances):
        for theta in (np.zeros(inst.x.shape[1]), rng.normal(size=inst.x.shape[1])):
            var = exact_fixed_theta(inst.model, inst.x, inst.design, theta).variance
            bound = variance_bound(inst.model, inst.x, inst.design, theta)
            tr.require(var <= bound, f"instance {k}: variance {var:.3g} > bound {bound:.3g}")
    return tr.result()


def check_weight_moments(instances: list[Instance]) -> CheckResult:
    """``E[omega_i omega_j]`` and ``E[omega_i omega_j Z_S]`` against enumeration."""
    tr = _Tracker("weight moments")
    for k, inst in enumerate(instances):
        g, design, beta = inst.model.graph, inst.design, inst.model.beta
        table = subset_table(g, beta)
        n = g.n
        gram = expectation(lambda z: np.einsum(
            "mi,mj->mij", *(2 * [est.weights_batch(table, design.p, z)])), design)
        got = np.array([[pair_gram(g, design, beta, i, j) for j in range(n)] for i in range(n)])
        tr.compare(got, gram, f"instance {k} gram")

        def kern(z):
            omega = est.weights_batch(table, design.p, z)
            zs = est._gather(z, table.members, 1.0).prod(-1)
            return np.einsum("mk,mj->mkj", omega[:, table.unit] * zs, omega)

        want = expectation(kern, design)
        subs = [tuple(int(j) for j in m if j >= 0) for m in table.members]
        for row, (i, s) in enumerate(zip(table.unit, subs)):
            for i2 in g.overlapping_partners(int(i)):
                tr.compare(vim_kernel(g, design, beta, int(i), int(i2), s), want[row, i2],
                           f"instance {k} kernel")
    return tr.result()


def check_covariance_bounds(instances: list[Instance], per_instance: int = 40,
                            seed: int = 0) -> CheckResult:
    tr = _Tracker("covariance bounds")
    rng = np.random.default_rng(seed)
    for k, inst in enumerate(instances):
        design, n = inst.design, inst.n
        w_all = lambda z: (z - design.p) / design.v
        for _ in range(per_instance):
            sets = [tuple(rng.choice(n, size=int(rng.integers(0, min(n, 3) + 1)), replace=False))
                    for _ in range(4)]
            s, s2, t, t2 = (list(a) for a in sets)

            def prods(z):
                w = w_all(z)
                a = w[:, s].prod(1) * z[:, s2].prod(1)
                b = w[:, t].prod(1) * z[:, t2].prod(1)
                return np.stack([a, b, a * b], axis=1)

            ea, eb, eab = expectation(prods, design)
            cov = eab - ea * eb
            bound = covariance_bound(s, s2, t, t2, design.floor)
            slack = ATOL + RTOL * max(abs(eab), 1.0)
            tr.require(-slack <= cov <= bound + slack,
                       f"instance {k}: cov {cov:.3g} outside [0, {bound:.3g}]",
                       max(0.0, -cov, cov - bound))
    return tr.result()


def check_omega_sq_bounds(instances: list[Instance]) -> CheckResult:
    tr = _Tracker("weight second-moment bounds")
    for k, inst in enumerate(instances):
        g, design, beta = inst.model.graph, inst.design, inst.model.beta
        lo, hi = omega_sq_bounds(g, design, beta)
        for i in range(g.n):
            m = pair_gram(g, design, beta, i, i)
            tr.require(lo - 1e-12 <= m <= hi * (1 + 1e-12),
                       f"instance {k} unit {i}: {m:.4g} outside [{lo}, {hi:.4g}]")
    return tr.result()


def run_validation(budget_n: int = 8, instance_count: int = 100, seed: int = 0) -> list[CheckResult]:
    """Run every oracle sweep; each returns one pass/fail line."""
    _check_budget(budget_n)
    if budget_n < 3:
        raise BudgetError("budget_n must be at least 3")
    mixed = random_instances(seed, instance_count, budget_n)
    small = random_instances(seed + 1, instance_count, min(budget_n, 6), min_n=3)
    equal = random_instances(seed + 2, max(1, instance_count // 2), min(budget_n, 7),
                             betas=(1,), equal_p=True)
    return [
        check_unbiasedness(mixed, seed=seed),
        check_coefficient_estimates(mixed),
        check_vim_expectation(small[: max(1, instance_count // 10)]),
        check_variance_decomposition(small[: max(1, instance_count // 4)], seed=seed),
        check_closed_form_gap(equal),
        check_variance_bound(mixed, seed=seed),
        check_covariance_bounds(mixed[: max(1, instance_count // 2)], seed=seed),
        check_weight_moments(mixed),
        check_omega_sq_bounds(mixed),
    ]


# -- the three-unit example ------------------------------------------------------

@dataclass(frozen=True)
class ToyRow:
    quantity: str
    value: float
    expected: float

    @property
    def passed(self) -> bool:
        return close(self.value, self.expected)


def toy_golden(thetas=(1.0, 4 / 3, 2.0)) -> list[ToyRow]:
    """Closed-form values of the three-unit example next to their enumerated counterparts."""
    inst = toy_instance()
    m, x, d = inst.model, inst.x, inst.design
    snipe = exact_fixed_theta(m, x, d)
    rows = [ToyRow("TTE", true_tte(m), 5 / 3),
            ToyRow("E[SNIPE]", snipe.mean, 5 / 3),
            ToyRow("Var(SNIPE)", snipe.variance, 16 / 9)]
    for th in thetas:
        rows.append(ToyRow(f"Var(TTE({th:.6g}))", exact_fixed_theta(m, x, d, [th]).variance,
                           16 / 9 + th ** 2 / 3))
    th_reg = float(population_theta_reg(m, x, d)[0])
    rows += [ToyRow("theta_Reg", th_reg, 4 / 3),
             ToyRow("theta_VIM", float(population_theta_vim(m, x, d)[0]), 0.0)]
    for label, th, want in (("0", 0.0, (8 / 3, -8 / 9)), ("theta_Reg", th_reg, (56 / 27, 8 / 27))):
        v_var, v_cov = variance_split(m, x, d, [th])
        rows += [ToyRow(f"V_Var({label})", v_var, want[0]), ToyRow(f"V_Cov({label})", v_cov, want[1])]
    return rows


@dataclass(frozen=True)
class BlockComparison:
    m: int
    var_snipe: float
    var_reg: float
    var_vim: float
    theta_reg: float
    theta_vim: float
    best_alternative: float

    @property
    def passed(self) -> bool:
        tol = ATOL + RTOL * self.var_snipe
        return (self.var_vim <= self.var_snipe + tol and self.var_reg > self.var_snipe + tol
                and self.var_vim <= self.best_alternative + tol)


def toy_block_comparison(m: int = 200, alternatives: int = 20, seed: int = 0) -> BlockComparison:
    """Exact variances at the population coefficients on ``m`` disjoint three-unit blocks."""
    if m < 1:
        raise ValueError("need at least one block")
    inst = toy_blocks(m)
    mod, x, d = inst.model, inst.x, inst.design
    th_reg = population_theta_reg(mod, x, d)
    th_vim = population_theta_vim(mod, x, d)
    var = lambda th: exact_fixed_theta(mod, x, d, th).variance
    rng = np.random.default_rng(seed)
    alts = [var(rng.uniform(-3, 3, size=x.shape[1])) for _ in range(alternatives)]
    return BlockComparison(m, var(None), var(th_reg), var(th_vim), float(th_reg[0]),
                           float(th_vim[0]), min(alts) if alts else math.inf)
