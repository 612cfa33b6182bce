"""Total-treatment-effect estimators for one realized experiment.

Everything polynomial in the treatments is evaluated over the flat subset table
of the graph, so the batch helpers accept assignments of shape ``(..., n)`` and
are reused by the enumeration oracle.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from . import moments
from .graph import Graph, SubsetTable, local_patterns, neighbor_subsets, subset_table
from .moments import Design, KernelCache, pair_gram

COND_LIMIT = 1e12


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """One experiment: assignment, outcomes, covariates, graph, design and order."""

    z: npt.NDArray
    y: npt.NDArray
    x: npt.NDArray
    graph: Graph
    design: Design
    beta: int = 1

    def __post_init__(self):
        n = self.graph.n
        z = np.asarray(self.z, dtype=np.float64).ravel()
        y = np.asarray(self.y, dtype=np.float64).ravel()
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if z.size != n or y.size != n or x.shape[0] != n or self.design.n != n:
            raise ValueError("z, y, x and design must all have one entry per unit")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("z must be binary")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise ValueError("outcomes and covariates must be finite")
        if self.beta < 1:
            raise ValueError("beta must be positive")
        x = x - x.mean(axis=0)
        for arr in (z, y, x):
            arr.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def table(self) -> SubsetTable:
        return subset_table(self.graph, self.beta)


@dataclass
class EstimateReport:
    estimator: str
    point_estimate: float
    theta_used: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.point_estimate):
            raise EstimationError(f"{self.estimator}: non-finite estimate")


# -- batch kernels ------------------------------------------------------------

def _gather(vals: np.ndarray, members: np.ndarray, pad: float) -> np.ndarray:
    """``vals[..., members]`` with ``-1`` entries replaced by ``pad``."""
    ext = np.concatenate([vals, np.full(vals.shape[:-1] + (1,), pad)], axis=-1)
    return ext[..., np.where(members >= 0, members, vals.shape[-1])]


def weights_batch(table: SubsetTable, p: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``omega_i`` for assignments of shape ``(..., n)``."""
    w = (z - p) / (p * (1 - p))
    terms = moments.g_rows(table.members, p) * _gather(w, table.members, 1.0).prod(-1)
    return np.add.reduceat(terms, table.offsets[:-1], axis=-1)


def alpha_hat_batch(table: SubsetTable, p: np.ndarray, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Coefficient estimates for every subset-table row.

    The sum over supersets ``U`` of ``S`` inside the β-subsets equals
    ``q_S * sum_{r <= beta-|S|} e_r(N_i minus S)`` where ``e_r`` are elementary
    symmetric polynomials of ``q_l = (p_l - Z_l)/(1 - p_l)``. Removing ``S`` from
    ``N_i`` divides the generating polynomial by ``prod_{k in S} (1 + q_k t)``.
    """
    beta = table.beta
    q = (p - z) / (1 - p)
    q_s = _gather(q, table.members, 1.0).prod(-1)
    lead = q.shape[:-1]
    c = np.empty(lead + (table.unit.size, beta + 1))
    for r in range(beta + 1):
        e_r = np.add.reduceat(np.where(table.size == r, q_s, 0.0), table.offsets[:-1], axis=-1)
        c[..., r] = e_r[..., table.unit]
    for m in range(beta):
        q_k = _gather(q, table.members[:, m], 0.0)
        for r in range(1, beta + 1):
            c[..., r] -= q_k * c[..., r - 1]
    keep = np.arange(beta + 1)[None, :] <= (beta - table.size)[:, None]
    tail = (c * keep).sum(-1)
    lead_factor = _gather(-q / p, table.members, 1.0).prod(-1)
    return y[..., table.unit] * lead_factor * tail


# -- public operations ---------------------------------------------------------

def snipe_weights(ds: Dataset) -> np.ndarray:
    return weights_batch(ds.table, ds.design.p, ds.z)


def estimate_tte_theta(ds: Dataset, theta) -> EstimateReport:
    """``(1/n) sum_i omega_i (Y_i - theta^T X_i)``; unbiased for every fixed theta."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.size != ds.x.shape[1]:
        raise ValueError(f"theta has length {theta.size}, covariates have {ds.x.shape[1]}")
    omega = snipe_weights(ds)
    est = float(np.mean(omega * (ds.y - ds.x @ theta)))
    return EstimateReport("theta", est, theta,
                          {"degenerate_units": int(np.sum(omega == 0))})


def alpha_hat(ds: Dataset, i: int, s) -> float:
    """Literal per-coefficient estimator, looping over supersets of ``S``."""
    s = tuple(sorted(int(j) for j in s))
    subsets = neighbor_subsets(ds.graph, i, ds.beta)
    if s not in subsets:
        raise ValueError(f"{s} is not a subset of size <= {ds.beta} of N_{i}")
    p, z = ds.design.p, ds.z
    total = 0.0
    for u in subsets:
        if set(s) <= set(u):
            total += float(np.prod([(p[l] - z[l]) / (1 - p[l]) for l in u]))
    lead = float(np.prod([-1.0 / p[j] for j in s]))
    return float(ds.y[i]) * lead * total


def _solve(gram: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, dict]:
    if not np.any(gram):
        raise EstimationError("Gram matrix is identically zero")
    cond = float(np.linalg.cond(gram))
    if np.isfinite(cond) and cond <= COND_LIMIT:
        theta = np.linalg.solve(gram, rhs)
        fallback = False
    else:
        theta = np.linalg.pinv(gram) @ rhs
        fallback = True
    return theta, {"condition_number": cond, "pinv_fallback": fallback}


def theta_reg_info(ds: Dataset) -> tuple[np.ndarray, dict]:
    omega = snipe_weights(ds)
    w2 = omega ** 2
    if not np.any(w2):
        raise EstimationError("all SNIPE weights are zero")
    xw = ds.x * w2[:, None]
    theta, diag = _solve(xw.T @ ds.x / ds.n, xw.T @ ds.y / ds.n)
    diag["degenerate_units"] = int(np.sum(omega == 0))
    return theta, diag


def theta_reg(ds: Dataset) -> np.ndarray:
    """Slope of the omega^2-weighted least-squares fit of Y on X."""
    return theta_reg_info(ds)[0]


@lru_cache(maxsize=512)
def _cached_local_kernel(degree: int, beta: int, p_local: tuple) -> np.ndarray:
    k = moments.local_kernel(local_patterns(degree, beta), np.array(p_local))
    k.setflags(write=False)
    return k


def _unit_groups(ds: Dataset) -> dict[tuple, np.ndarray]:
    """Units sharing degree and local probabilities share one kernel matrix."""
    g, p = ds.graph, ds.design.p
    deg = g.in_degree
    if ds.design.is_uniform:
        return {(int(d), (float(p[0]),) * int(d)): np.flatnonzero(deg == d)
                for d in np.unique(deg)}
    groups: dict[tuple, list] = {}
    for i in range(g.n):
        key = (int(deg[i]), tuple(float(v) for v in p[g.neighbors(i)]))
        groups.setdefault(key, []).append(i)
    return {k: np.array(v) for k, v in groups.items()}


def _unique_rows(rows: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct padded subsets and the inverse map; packs rows into one integer when it fits."""
    width = rows.shape[1]
    if (n + 1) ** width < 2 ** 62:
        key = np.zeros(rows.shape[0], dtype=np.int64)
        for k in range(width):
            key = key * (n + 1) + (rows[:, k] + 1)
        _, first, inv = np.unique(key, return_index=True, return_inverse=True)
        return rows[first], inv.ravel()
    uniq, inv = np.unique(rows, axis=0, return_inverse=True)
    return uniq, inv.ravel()


def vim_system(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Expected Gram ``G`` and the unbiased cross-moment vector ``b``.

    Writes the pairwise sums over overlapping units as sums over shared
    subsets ``T``: each ``T`` contributes through ``Xi_T``, the covariate total
    of all units whose neighborhood contains ``T``.
    """
    table, p, n = ds.table, ds.design.p, ds.n
    ah = alpha_hat_batch(table, p, ds.z, ds.y)
    c = np.zeros_like(ah)
    for (d, p_local), units in _unit_groups(ds).items():
        kern = _cached_local_kernel(d, ds.beta, p_local)
        rows = table.offsets[units][:, None] + np.arange(kern.shape[0])
        c[rows] = ah[rows] @ kern.T

    nz = np.flatnonzero(table.size > 0)
    uniq, tid = _unique_rows(table.members[nz], n)
    inc = sp.csr_array((np.ones(nz.size), (tid, table.unit[nz])), shape=(uniq.shape[0], n))
    xi = inc @ ds.x
    g_t = moments.g_rows(uniq, p)
    v_t = _gather(p * (1 - p), uniq, 1.0).prod(-1)
    gram = (xi * (g_t ** 2 / v_t)[:, None]).T @ xi / n ** 2
    rhs = xi[tid].T @ (g_t[tid] * c[nz]) / n ** 2
    return gram, rhs


def theta_vim_info(ds: Dataset) -> tuple[np.ndarray, dict]:
    gram, rhs = vim_system(ds)
    return _solve(gram, rhs)


def theta_vim(ds: Dataset) -> np.ndarray:
    """Maximizer of the unbiased estimate of the variance reduction over SNIPE."""
    return theta_vim_info(ds)[0]


def vim_system_reference(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Same system as :func:`vim_system`, by literal loops over units, subsets and partners."""
    g, design, beta, n, x = ds.graph, ds.design, ds.beta, ds.n, ds.x
    kernel = KernelCache(g, design, beta)
    gram = np.zeros((x.shape[1], x.shape[1]))
    rhs = np.zeros(x.shape[1])
    for i in range(n):
        partners = g.overlapping_partners(i)
        for i2 in partners:
            gram += pair_gram(g, design, beta, i, int(i2)) * np.outer(x[i], x[i2])
        for s in neighbor_subsets(g, i, beta):
            a = alpha_hat(ds, i, s)
            if a == 0.0:
                continue
            for i2 in partners:
                rhs += a * kernel(i, int(i2), s) * x[i2]
    return gram / n ** 2, rhs / n ** 2


def theta_vim_reference(ds: Dataset) -> np.ndarray:
    gram, rhs = vim_system_reference(ds)
    return _solve(gram, rhs)[0]


def snipe_estimate(ds: Dataset) -> EstimateReport:
    rep = estimate_tte_theta(ds, np.zeros(ds.x.shape[1]))
    rep.estimator, rep.theta_used = "SNIPE", None
    return rep


def reg_snipe_estimate(ds: Dataset) -> EstimateReport:
    theta, diag = theta_reg_info(ds)
    rep = estimate_tte_theta(ds, theta)
    return EstimateReport("Reg-SNIPE", rep.point_estimate, theta, diag)


def vim_snipe_estimate(ds: Dataset) -> EstimateReport:
    theta, diag = theta_vim_info(ds)
    rep = estimate_tte_theta(ds, theta)
    diag.update(rep.diagnostics)
    return EstimateReport("VIM-SNIPE", rep.point_estimate, theta, diag)


def _groups(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    treated = ds.z == 1
    if treated.all() or not treated.any():
        raise EstimationError("both treatment groups must be nonempty")
    return treated, ~treated


def dm_estimate(ds: Dataset) -> EstimateReport:
    t, c = _groups(ds)
    return EstimateReport("DM", float(ds.y[t].mean() - ds.y[c].mean()))


def _group_slope(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, dict]:
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    gram = xc.T @ xc
    if not np.any(gram):
        return np.zeros(x.shape[1]), {"condition_number": float("inf"), "pinv_fallback": True}
    return _solve(gram, xc.T @ yc)


def lin_estimate(ds: Dataset) -> EstimateReport:
    """Difference in means after separate OLS adjustment in each arm."""
    t, c = _groups(ds)
    th1, d1 = _group_slope(ds.x[t], ds.y[t])
    th0, d0 = _group_slope(ds.x[c], ds.y[c])
    est = float(np.mean(ds.y[t] - ds.x[t] @ th1) - np.mean(ds.y[c] - ds.x[c] @ th0))
    n1, n0 = int(t.sum()), int(c.sum())
    theta = (n0 * th1 + n1 * th0) / ds.n
    diag = {"theta_treated": th1, "theta_control": th0,
            "condition_number": max(d1["condition_number"], d0["condition_number"]),
            "pinv_fallback": d1["pinv_fallback"] or d0["pinv_fallback"]}
    return EstimateReport("Lin", est, theta, diag)


def theta_lin(ds: Dataset) -> np.ndarray:
    return lin_estimate(ds).theta_used


ESTIMATORS: dict[str, Callable[[Dataset], EstimateReport]] = {
    "DM": dm_estimate,
    "Lin": lin_estimate,
    "SNIPE": snipe_estimate,
    "Reg-SNIPE": reg_snipe_estimate,
    "VIM-SNIPE": vim_snipe_estimate,
}

_ALIASES = {k.lower().replace("-snipe", ""): k for k in ESTIMATORS}
_ALIASES.update({k.lower(): k for k in ESTIMATORS})


def resolve_estimator(name: str) -> str:
    try:
        return _ALIASES[name.lower()]
    except KeyError:
        raise KeyError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None


# -- dataset files -------------------------------------------------------------

def read_dataset(path, graph: Graph, beta: int = 1, p: float | None = None) -> Dataset:
    """Read ``unit,z,y,x1..xd`` rows; probabilities come from a ``p`` column or ``p``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        header = reader.fieldnames or []
    for col in ("unit", "z", "y"):
        if col not in header:
            raise ValueError(f"{path}: missing column {col!r}")
    xcols = sorted((c for c in header if c.startswith("x") and c[1:].isdigit()),
                   key=lambda c: int(c[1:]))
    if not xcols:
        raise ValueError(f"{path}: need at least one covariate column x1..xd")
    order = np.argsort([int(r["unit"]) for r in rows])
    rows = [rows[k] for k in order]
    if [int(r["unit"]) for r in rows] != list(range(graph.n)):
        raise ValueError(f"{path}: units must be exactly 0..{graph.n - 1}")
    z = np.array([float(r["z"]) for r in rows])
    y = np.array([float(r["y"]) for r in rows])
    x = np.array([[float(r[c]) for c in xcols] for r in rows])
    if "p" in header:
        design = Design(np.array([float(r["p"]) for r in rows]))
    elif p is not None:
        design = Design.uniform(graph.n, p)
    else:
        raise ValueError(f"{path}: no 'p' column; pass a scalar treatment probability")
    return Dataset(z, y, x, graph, design, beta)


def write_dataset(ds: Dataset, path, with_p: bool = True) -> None:
    d = ds.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "z", "y"] + [f"x{k + 1}" for k in range(d)] + (["p"] if with_p else []))
        for i in range(ds.n):
            row = [i, int(ds.z[i]), repr(float(ds.y[i]))] + [repr(float(v)) for v in ds.x[i]]
            w.writerow(row + ([repr(float(ds.design.p[i]))] if with_p else []))

