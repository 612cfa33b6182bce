"""Exact expectations of products of Bernoulli weight factors.

With ``w_j = (Z_j - p_j) / (p_j (1 - p_j))`` and independent ``Z_j``, any
expectation of the form ``E[prod_j w_j^{a_j} Z_j^{b_j}]`` factorizes over units.
Everything here is computed from that per-unit factor; nothing is sampled.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .graph import Graph, neighbor_subsets


class DesignError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Design:
    """Independent Bernoulli design with per-unit probabilities ``p`` and a floor."""

    p: np.ndarray
    floor: float | None = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64).ravel()
        if p.size == 0:
            raise DesignError("design needs at least one unit")
        if not np.all((p > 0) & (p < 1)):
            raise DesignError("treatment probabilities must lie strictly inside (0, 1)")
        floor = float(min(p.min(), 1 - p.max())) if self.floor is None else float(self.floor)
        if not 0 < floor <= 0.5:
            raise DesignError(f"floor must lie in (0, 0.5], got {floor}")
        if np.any(p < floor - 1e-15) or np.any(p > 1 - floor + 1e-15):
            raise DesignError("probabilities violate the design floor")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "floor", floor)

    @classmethod
    def uniform(cls, n: int, p: float) -> "Design":
        return cls(np.full(n, float(p)))

    @property
    def n(self) -> int:
        return self.p.size

    @property
    def v(self) -> np.ndarray:
        return self.p * (1 - self.p)

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.p == self.p[0]))


@dataclass(frozen=True)
class MomentSpec:
    """Integrand ``prod_j w_j^{a_j} * prod_{k in indicator_set} Z_k``."""

    weight_exponents: Mapping[int, int] = field(default_factory=dict)
    indicator_set: frozenset = frozenset()

    def __post_init__(self):
        if any(a < 1 for a in self.weight_exponents.values()):
            raise ValueError("weight exponents must be positive")
        object.__setattr__(self, "indicator_set", frozenset(self.indicator_set))


def g_coeff(s: Iterable[int], design: Design) -> float:
    """``prod_{j in S} (1 - p_j) - prod_{j in S} (-p_j)``; zero on the empty set."""
    s = list(s)
    p = design.p[s] if s else np.empty(0)
    return float(np.prod(1 - p) - np.prod(-p))


def g_rows(members: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Vectorized ``g`` over rows of a ``-1``-padded member array."""
    pad = members < 0
    pm = p[np.maximum(members, 0)]
    return np.where(pad, 1.0, 1 - pm).prod(-1) - np.where(pad, 1.0, -pm).prod(-1)


def bernoulli_moment(a: int, b: int, p: float) -> float:
    """``E[w^a Z^b]`` by enumerating ``Z in {0, 1}``."""
    if not 0 < p < 1:
        raise DesignError(f"p must lie in (0, 1), got {p}")
    if a < 0 or b not in (0, 1):
        raise ValueError("need a >= 0 and b in {0, 1}")
    v = p * (1 - p)
    on = p * ((1 - p) / v) ** a
    if b:
        return on
    return on + (1 - p) * (-p / v) ** a


def expect_product(spec: MomentSpec, design: Design) -> float:
    out = 1.0
    for j in set(spec.weight_exponents) | spec.indicator_set:
        a = spec.weight_exponents.get(j, 0)
        out *= bernoulli_moment(a, int(j in spec.indicator_set), float(design.p[j]))
        if out == 0.0:
            return 0.0
    return out


def _merge(s: tuple, t: tuple) -> dict[int, int]:
    exps: dict[int, int] = {}
    for j in s:
        exps[j] = exps.get(j, 0) + 1
    for j in t:
        exps[j] = exps.get(j, 0) + 1
    return exps


def weighted_moment(g: Graph, design: Design, beta: int, i: int, i2: int,
                    indicators: Iterable[int] = ()) -> float:
    """``E[omega_i omega_{i2} prod_{k in indicators} Z_k]`` by the full double sum."""
    ind = frozenset(indicators)
    sub_i = neighbor_subsets(g, i, beta)[1:]
    sub_i2 = neighbor_subsets(g, i2, beta)[1:]
    g_i = [g_coeff(s, design) for s in sub_i]
    g_i2 = [g_coeff(t, design) for t in sub_i2]
    total = 0.0
    for s, gs in zip(sub_i, g_i):
        for t, gt in zip(sub_i2, g_i2):
            if gs == 0.0 or gt == 0.0:
                continue
            total += gs * gt * expect_product(MomentSpec(_merge(s, t), ind), design)
    return total


def pair_gram(g: Graph, design: Design, beta: int, i: int, i2: int) -> float:
    """``M_{i,i2} = E[omega_i omega_{i2}]``, a sum over shared subsets only."""
    shared = set(neighbor_subsets(g, i, beta)) & set(neighbor_subsets(g, i2, beta))
    v = design.v
    return math.fsum(g_coeff(s, design) ** 2 / float(np.prod(v[list(s)]))
                     for s in shared if s)


def vim_kernel(g: Graph, design: Design, beta: int, i: int, i2: int, s: Iterable[int]) -> float:
    """``E[omega_i omega_{i2} prod_{k in S} Z_k]`` for ``S`` a β-subset of ``N_i``."""
    return weighted_moment(g, design, beta, i, i2, s)


class KernelCache:
    """Per-call cache of ``vim_kernel`` values keyed by ``(i, i2, S)``."""

    def __init__(self, g: Graph, design: Design, beta: int):
        self.g, self.design, self.beta = g, design, beta
        self._store: dict[tuple, float] = {}

    def __call__(self, i: int, i2: int, s: tuple) -> float:
        key = (i, i2, tuple(s))
        if key not in self._store:
            self._store[key] = vim_kernel(self.g, self.design, self.beta, i, i2, s)
        return self._store[key]


def covariance_bound(s: Iterable[int], s2: Iterable[int], t: Iterable[int],
                     t2: Iterable[int], floor: float) -> float:
    """Upper bound on ``Cov[W_S Z_{S'}, W_T Z_{T'}]`` from the support and overlap sizes."""
    s, s2, t, t2 = map(frozenset, (s, s2, t, t2))
    if not (s ^ t) <= (s2 | t2):
        return 0.0
    return (1.0 / (floor * (1 - floor))) ** len(s & t)


def local_kernel(patterns: tuple[tuple[int, ...], ...], p: np.ndarray) -> np.ndarray:
    """Matrix ``K[T, S] = E[omega W_T Z_S]`` for one neighborhood in local coordinates.

    ``omega`` is the weight built on ``patterns`` (all subsets of the neighborhood
    of size at most β) and ``p`` the local probabilities. The product
    ``E[W_{S'} W_T Z_S]`` is nonzero only when ``S' = (T \\ S) | Q`` for some
    ``Q`` inside ``S``, which keeps the sum short.
    """
    if all(len(s) <= 1 for s in patterns) and len(patterns) == p.size + 1:
        return _first_order_kernel(p)
    return _local_kernel_general(patterns, p)


def _first_order_kernel(p: np.ndarray) -> np.ndarray:
    # rows T = {t}: g_t/v_t against the empty S, g_t p_s/v_t against S = {s}, g_t/p_t on S = T
    d = p.size
    v = p * (1 - p)
    out = np.zeros((d + 1, d + 1))
    out[1:, 0] = 1 / v
    out[1:, 1:] = p[None, :] / v[:, None]
    out[1 + np.arange(d), 1 + np.arange(d)] = 1 / p
    return out


def _local_kernel_general(patterns: tuple[tuple[int, ...], ...], p: np.ndarray) -> np.ndarray:
    index = {s: r for r, s in enumerate(patterns)}
    v = p * (1 - p)
    g = np.array([np.prod(1 - p[list(s)]) - np.prod(-p[list(s)]) for s in patterns])
    size = len(patterns)
    out = np.zeros((size, size))
    for r_t, t in enumerate(patterns):
        if not t:
            continue
        tset = set(t)
        for r_s, s in enumerate(patterns):
            sset = set(s)
            base = tuple(sorted(tset - sset))
            acc = 0.0
            for k in range(len(s) + 1):
                for q in itertools.combinations(s, k):
                    sp_ = tuple(sorted(base + q))
                    r = index.get(sp_)
                    if r is None or g[r] == 0.0:
                        continue
                    val = g[r]
                    spset = set(sp_)
                    for j in spset & tset:
                        val /= p[j] if j in sset else v[j]
                    for j in sset - spset - tset:
                        val *= p[j]
                    acc += val
            out[r_t, r_s] = acc
    return out

