"""Potential-outcome models that are low-order polynomials in neighbor treatments,
plus the synthetic coefficient generators used by the simulation harness."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .graph import Graph, subset_table


class ModelError(ValueError):
    pass


def _as_key(s) -> tuple[int, ...]:
    return tuple(sorted(int(j) for j in s))


@dataclass(frozen=True, eq=False)
class InteractionModel:
    """Coefficients ``alpha[(i, S)]`` of ``Y_i(z) = sum_S alpha_{i,S} prod_{j in S} z_j``.

    Missing keys are zero. Every key must name a subset of ``N_i`` of size at
    most ``beta``.
    """

    graph: Graph
    beta: int
    coefficients: Mapping[tuple[int, tuple[int, ...]], float]
    _compiled: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.beta < 1:
            raise ModelError("beta must be positive")
        clean: dict[tuple[int, tuple[int, ...]], float] = {}
        for (i, s), a in self.coefficients.items():
            i, s = int(i), _as_key(s)
            if not 0 <= i < self.graph.n:
                raise ModelError(f"unit {i} out of range")
            if len(s) > self.beta or len(set(s)) != len(s):
                raise ModelError(f"subset {s} of unit {i} exceeds order {self.beta}")
            if not set(s) <= set(self.graph.neighbors(i).tolist()):
                raise ModelError(f"subset {s} is not inside the neighborhood of unit {i}")
            clean[(i, s)] = clean.get((i, s), 0.0) + float(a)
        object.__setattr__(self, "coefficients", clean)

    @classmethod
    def from_rows(cls, graph: Graph, beta: int, alpha: np.ndarray) -> "InteractionModel":
        """Build from one coefficient per row of ``subset_table(graph, beta)``."""
        table = subset_table(graph, beta)
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.shape != table.unit.shape:
            raise ModelError("need exactly one coefficient per subset-table row")
        coefs = {(int(i), tuple(int(j) for j in m if j >= 0)): float(a)
                 for i, m, a in zip(table.unit, table.members, alpha)}
        return cls(graph, beta, coefs)

    @property
    def n(self) -> int:
        return self.graph.n

    def coef(self, i: int, s) -> float:
        return self.coefficients.get((int(i), _as_key(s)), 0.0)

    def row_coefficients(self) -> np.ndarray:
        """Coefficients aligned with ``subset_table(graph, beta)`` rows."""
        if "rows" not in self._compiled:
            table = subset_table(self.graph, self.beta)
            self._compiled["rows"] = np.array(
                [self.coefficients.get((int(i), tuple(int(j) for j in m if j >= 0)), 0.0)
                 for i, m in zip(table.unit, table.members)])
        return self._compiled["rows"]

    def _arrays(self):
        if "arrays" not in self._compiled:
            keys = list(self.coefficients)
            unit = np.array([k[0] for k in keys], dtype=np.int64)
            members = np.full((len(keys), self.beta), -1, dtype=np.int64)
            for r, (_, s) in enumerate(keys):
                members[r, :len(s)] = s
            alpha = np.array([self.coefficients[k] for k in keys], dtype=np.float64)
            self._compiled["arrays"] = (unit, members, alpha)
        return self._compiled["arrays"]

    def y_max(self) -> float:
        """``max_i sum_S |alpha_{i,S}|``."""
        unit, _, alpha = self._arrays()
        return float(np.bincount(unit, np.abs(alpha), minlength=self.n).max())


def evaluate_potential(model: InteractionModel, z: np.ndarray) -> np.ndarray:
    """Potential outcomes for one assignment ``(n,)`` or a batch ``(m, n)``."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.n:
        raise ModelError(f"assignment has length {z.shape[-1]}, model has {model.n} units")
    unit, members, alpha = model._arrays()
    lead = z.shape[:-1]
    zp = np.concatenate([z, np.ones(lead + (1,))], axis=-1)
    mono = zp[..., np.where(members >= 0, members, model.n)].prod(-1) * alpha
    flat = mono.reshape(-1, unit.size)
    inc = sp.csr_array((np.ones(unit.size), (unit, np.arange(unit.size))),
                       shape=(model.n, unit.size))
    return np.asarray((inc @ flat.T).T).reshape(lead + (model.n,))


def true_tte(model: InteractionModel) -> float:
    """Average of ``Y_i(1) - Y_i(0)``: the mean of all non-intercept coefficients."""
    total = sum(a for (_, s), a in model.coefficients.items() if s)
    return total / model.n


def write_model(model: InteractionModel, path) -> None:
    lines = [f"# n={model.n} beta={model.beta}"]
    for (i, s), a in sorted(model.coefficients.items()):
        lines.append(f"{i} | {','.join(map(str, s)) if s else '-'} | {a!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_model(path, graph: Graph, beta: int) -> InteractionModel:
    """Parse lines ``i | j1,j2 | alpha`` (``-`` for the empty subset)."""
    coefs = {}
    for ln_no, ln in enumerate(Path(path).read_text().splitlines(), 1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        parts = [t.strip() for t in ln.split("|")]
        if len(parts) != 3:
            raise ModelError(f"{path}:{ln_no}: expected 'i | subset | alpha'")
        s = () if parts[1] == "-" else tuple(int(t) for t in parts[1].split(","))
        coefs[(int(parts[0]), s)] = float(parts[2])
    return InteractionModel(graph, beta, coefs)


# -- synthetic generators --------------------------------------------------

def _sparse_adjacency(a) -> sp.csr_array:
    a = sp.csr_array(a, dtype=np.float64)
    if a.shape[0] != a.shape[1]:
        raise ModelError("adjacency must be square")
    if not np.allclose(a.diagonal(), 1.0):
        raise ModelError("adjacency needs a unit diagonal (self-loops)")
    return a


def _degree_weighted(a: sp.csr_array, c: np.ndarray) -> sp.csr_array:
    """``D (A - I) diag(c / s)`` with ``D`` the row sums and ``s`` its column sums."""
    n = a.shape[0]
    d = np.asarray(a.sum(axis=1)).ravel()
    off = (a - sp.eye_array(n, format="csr")).tocsr()
    off.eliminate_zeros()
    tilde = sp.diags_array(d) @ off
    s = np.asarray(tilde.sum(axis=0)).ravel()
    s[s == 0] = 1.0
    return (tilde @ sp.diags_array(c / s)).tocsr()


def _abs_quadratic_sum(x: np.ndarray, psi: np.ndarray, block: int = 2048) -> float:
    xp = x @ psi
    total = 0.0
    for lo in range(0, x.shape[0], block):
        total += float(np.abs(xp[lo:lo + block] @ x.T).sum())
    return total


def gen_alpha_linear(a, x_true: np.ndarray, psi: np.ndarray | None = None, diag_c: float = 1.0,
                     r: float = 1.0, v: np.ndarray | None = None, u: np.ndarray | None = None,
                     rng: np.random.Generator | None = None) -> sp.csr_array:
    """Edge-supported first-order effects with degree weighting and a covariate term.

    The covariate term is ``x_i^T psi x_j`` rescaled so that the absolute values
    of all n^2 such products sum to ``n^2 / 5``; it is kept only on edges.
    """
    a = _sparse_adjacency(a)
    n = a.shape[0]
    x = np.asarray(x_true, dtype=np.float64).reshape(n, -1)
    psi = np.eye(x.shape[1]) if psi is None else np.asarray(psi, dtype=np.float64)
    offdiag = r * diag_c
    rng = np.random.default_rng() if rng is None and (v is None or u is None) else rng
    v = rng.random(n) if v is None else np.asarray(v, dtype=np.float64)
    c = offdiag * v
    u = rng.random(n) if u is None else np.asarray(u, dtype=np.float64)
    base = _degree_weighted(a, c) + sp.diags_array(diag_c * u)

    total = _abs_quadratic_sum(x, psi)
    scale = n * n / (5 * total) if total > 0 else 0.0
    coo = a.tocoo()
    rows, cols = coo.row, coo.col
    vals = scale * np.einsum("kd,de,ke->k", x[rows], psi, x[cols])
    vals *= np.where(rows == cols, diag_c, offdiag)
    cov = sp.csr_array((vals, (rows, cols)), shape=(n, n))
    return (base + cov).tocsr()


def gen_alpha_quad(a, x_true: np.ndarray, diag_c: float = 1.0, r: float = 1.0,
                   v: np.ndarray | None = None, u: np.ndarray | None = None,
                   rng: np.random.Generator | None = None) -> sp.csr_array:
    """Weights of the saturating second-order term; the diagonal depends on covariates."""
    a = _sparse_adjacency(a)
    n = a.shape[0]
    x = np.asarray(x_true, dtype=np.float64).reshape(n, -1)
    rng = np.random.default_rng() if rng is None and (v is None or u is None) else rng
    v = rng.random(n) if v is None else np.asarray(v, dtype=np.float64)
    u = rng.random(n) if u is None else np.asarray(u, dtype=np.float64)
    return (_degree_weighted(a, r * diag_c * v) + sp.diags_array((x.sum(axis=1) + diag_c) * u)).tocsr()


@dataclass(frozen=True, eq=False)
class SimOutcomeSpec:
    alpha0: np.ndarray
    alpha_linear: sp.csr_array
    theta_true: np.ndarray
    x_true: np.ndarray
    graph: Graph
    alpha_quad: sp.csr_array | None = None

    def __post_init__(self):
        adj = self.graph.adjacency()
        for name in ("alpha_linear", "alpha_quad"):
            m = getattr(self, name)
            if m is None:
                continue
            m = sp.csr_array(m, dtype=np.float64)
            m.eliminate_zeros()
            if (abs(m) - abs(m).multiply(adj)).count_nonzero():
                raise ModelError(f"{name} has entries outside the graph's neighborhoods")
            object.__setattr__(self, name, m)


def _quad_denominators(alpha_quad: sp.csr_array) -> np.ndarray:
    den = np.asarray(alpha_quad.sum(axis=1)).ravel()
    bad = den == 0
    if bad.any():
        warnings.warn(f"{int(bad.sum())} unit(s) have a zero quadratic denominator; "
                      "their second-order term is set to 0", RuntimeWarning, stacklevel=3)
    return den


def sim_outcomes(spec: SimOutcomeSpec, z: np.ndarray, beta: int) -> np.ndarray:
    """Direct evaluation of the simulation outcome for one assignment."""
    z = np.asarray(z, dtype=np.float64)
    y = spec.alpha0 + spec.x_true @ spec.theta_true + spec.alpha_linear @ z
    if beta == 2:
        y = y + _quad_term(spec.alpha_quad, z)
    return y


def _quad_term(aq: sp.csr_array, z: np.ndarray) -> np.ndarray:
    den = _quad_denominators(aq)
    num = (aq @ z) ** 2 - (aq.multiply(aq)) @ z
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(den != 0, num / np.where(den != 0, den, 1.0) ** 2, 0.0)
    return q


def sim_true_tte(spec: SimOutcomeSpec, beta: int) -> float:
    eff = np.asarray(spec.alpha_linear.sum(axis=1)).ravel()
    if beta == 2:
        eff = eff + _quad_term(spec.alpha_quad, np.ones(spec.graph.n))
    return float(eff.mean())


def build_sim_outcome(spec: SimOutcomeSpec, beta: int) -> InteractionModel:
    """Expand the simulation outcome into explicit subset coefficients."""
    if beta not in (1, 2):
        raise ModelError("simulation outcomes are defined for beta in {1, 2}")
    if beta == 2 and spec.alpha_quad is None:
        raise ModelError("beta = 2 needs alpha_quad")
    intercept = spec.alpha0 + spec.x_true @ spec.theta_true
    coefs: dict = {(i, ()): float(intercept[i]) for i in range(spec.graph.n)}
    lin = spec.alpha_linear.tocoo()
    for i, j, a in zip(lin.row, lin.col, lin.data):
        coefs[(int(i), (int(j),))] = coefs.get((int(i), (int(j),)), 0.0) + float(a)
    if beta == 2:
        aq = spec.alpha_quad.tocsr()
        den = _quad_denominators(aq)
        for i in range(spec.graph.n):
            if den[i] == 0:
                continue
            cols = aq.indices[aq.indptr[i]:aq.indptr[i + 1]]
            vals = aq.data[aq.indptr[i]:aq.indptr[i + 1]]
            order = np.argsort(cols)
            cols, vals = cols[order], vals[order]
            for a_ in range(cols.size):
                for b_ in range(a_ + 1, cols.size):
                    coefs[(i, (int(cols[a_]), int(cols[b_])))] = \
                        2.0 * vals[a_] * vals[b_] / den[i] ** 2
    return InteractionModel(spec.graph, beta, coefs)
