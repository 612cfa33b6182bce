"""Monte Carlo experiments on synthetic networks.

Every random draw comes from a stream keyed by ``(seed, sweep index, replicate,
purpose)``, so any replicate can be regenerated alone and results never depend
on scheduling.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import estimators as est
from .graph import Graph, gen_erdos_renyi, gen_soft_rgg
from .moments import Design
from .outcome_model import (SimOutcomeSpec, gen_alpha_linear, gen_alpha_quad, sim_outcomes,
                            sim_true_tte)

SETTINGS = ("ER-b1", "ER-b2", "SRGG-b1", "SRGG-b2")
ESTIMATOR_ORDER = ("DM", "Lin", "SNIPE", "Reg-SNIPE", "VIM-SNIPE")
SIGMA_SCHEDULE = {5000: 0.02, 6000: 0.018, 7000: 0.016, 8000: 0.016, 9000: 0.014, 10000: 0.014}
DEFAULT_SIGMA = 0.02
DEFAULT_THETA = 2.0  # per-coordinate covariate effect when theta_true is unset
THREADS_ENV = "NETSNIPE_THREADS"

TAG_COVARIATES, TAG_GRAPH, TAG_COEFFICIENTS, TAG_TREATMENT = range(4)
_PER_REPLICATE, _FIXED_POPULATION = 0, 1

RAW_HEADER = ["setting", "sweep_param", "sweep_value", "rep", "estimator", "estimate", "true_tte"]
SUMMARY_HEADER = ["setting", "sweep_param", "sweep_value", "estimator", "rel_bias", "rel_mse",
                  "n_fail"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    setting: str = "ER-b1"
    n: int = 5000
    p: float = 0.5
    r: float = 1.0
    rho: float = 1.0
    reps: int = 500
    seed: int = 0
    sigma: float | None = None
    p_edge: float | None = None
    d_x: int = 3
    psi: tuple | None = None
    diag_c: float = 1.0
    theta_true: tuple | None = None
    mse_normalization: str = "abs"
    fix_population: bool = False

    def __post_init__(self):
        setting = _canonical_setting(self.setting)
        object.__setattr__(self, "setting", setting)
        if self.reps < 1:
            raise ConfigError("reps: must be at least 1")
        if not 0 < self.p < 1:
            raise ConfigError("p: must lie strictly between 0 and 1")
        if not 0 <= self.rho <= 1:
            raise ConfigError("rho: must lie in [0, 1]")
        if self.n < 2:
            raise ConfigError("n: need at least two units")
        if self.d_x < 1:
            raise ConfigError("d_x: must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise ConfigError("sigma: must be positive")
        if self.p_edge is not None and not 0 <= self.p_edge <= 1:
            raise ConfigError("p_edge: must lie in [0, 1]")
        if self.mse_normalization not in ("abs", "squared"):
            raise ConfigError("mse_normalization: choose 'abs' or 'squared'")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed: must be a non-negative 64-bit integer")
        if self.theta_true is not None and len(self.theta_true) != self.d_x:
            raise ConfigError(f"theta_true: need {self.d_x} entries")
        if self.psi is not None:
            psi = np.asarray(self.psi, dtype=float)
            if psi.shape != (self.d_x, self.d_x):
                raise ConfigError(f"psi: need a {self.d_x}x{self.d_x} matrix")

    @property
    def family(self) -> str:
        return self.setting.split("-")[0]

    @property
    def beta(self) -> int:
        return int(self.setting[-1])

    def graph_param(self) -> float:
        """Edge probability (ER) or decay rate (soft RGG) after defaults are applied."""
        if self.family == "ER":
            return 10.0 / self.n if self.p_edge is None else self.p_edge
        if self.sigma is not None:
            return self.sigma
        return SIGMA_SCHEDULE.get(self.n, DEFAULT_SIGMA) if self.beta == 2 else DEFAULT_SIGMA

    def theta_vector(self) -> np.ndarray:
        return np.full(self.d_x, DEFAULT_THETA) if self.theta_true is None else np.asarray(self.theta_true, float)

    def psi_matrix(self) -> np.ndarray:
        return np.eye(self.d_x) if self.psi is None else np.asarray(self.psi, float)

    def resolved(self) -> dict:
        out = dataclasses.asdict(self)
        out["graph_param"] = self.graph_param()
        out["theta_true"] = self.theta_vector().tolist()
        out["psi"] = self.psi_matrix().tolist()
        return out


def _canonical_setting(name: str) -> str:
    key = name.strip().upper().replace("Β", "B").replace("_", "-").replace("BETA", "B")
    for s in SETTINGS:
        if key == s.upper() or key == s.upper().replace("-", ""):
            return s
    raise ConfigError(f"setting: {name!r} is not one of {', '.join(SETTINGS)}")


def stream(seed: int, sweep_index: int, rep: int, tag: int, fixed: bool = False) -> np.random.Generator:
    """Independent generator for one (sweep point, replicate, purpose)."""
    kind = _FIXED_POPULATION if fixed else _PER_REPLICATE
    ss = np.random.SeedSequence(seed, spawn_key=(sweep_index, kind, rep, tag))
    return np.random.Generator(np.random.PCG64(ss))


def gen_covariates(n: int, d_x: int, rho: float, rng: np.random.Generator):
    """Observed covariates and the true covariates that drive outcomes and edges."""
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    draws = rng.standard_normal((2, n, d_x))
    x_obs = draws[0] - draws[0].mean(axis=0)
    x_unobs = draws[1] - draws[1].mean(axis=0)
    if rho == 1:
        return x_obs, x_obs.copy()
    if rho == 0:
        return x_obs, x_unobs
    return x_obs, rho * x_obs + math.sqrt(1 - rho ** 2) * x_unobs


@dataclass(frozen=True, eq=False)
class Population:
    graph: Graph
    x_obs: np.ndarray
    beta: int
    outcome: Callable[[np.ndarray], np.ndarray]
    true_tte: float

    @classmethod
    def from_sim(cls, sim: SimOutcomeSpec, x_obs: np.ndarray, beta: int) -> "Population":
        return cls(sim.graph, x_obs, beta, _SimOutcome(sim, beta), sim_true_tte(sim, beta))


@dataclass(frozen=True, eq=False)
class _SimOutcome:
    sim: SimOutcomeSpec
    beta: int

    def __call__(self, z):
        return sim_outcomes(self.sim, z, self.beta)


def make_population(spec: ExperimentSpec, sweep_index: int, rep: int, fixed: bool = False) -> Population:
    x_obs, x_true = gen_covariates(spec.n, spec.d_x, spec.rho,
                                   stream(spec.seed, sweep_index, rep, TAG_COVARIATES, fixed))
    g_rng = stream(spec.seed, sweep_index, rep, TAG_GRAPH, fixed)
    if spec.family == "ER":
        graph = gen_erdos_renyi(spec.n, spec.graph_param(), g_rng)
    else:
        graph = gen_soft_rgg(x_true, spec.graph_param(), g_rng)
    c_rng = stream(spec.seed, sweep_index, rep, TAG_COEFFICIENTS, fixed)
    adj = graph.adjacency()
    alpha0 = c_rng.random(spec.n)
    lin = gen_alpha_linear(adj, x_true, spec.psi_matrix(), spec.diag_c, spec.r, rng=c_rng)
    quad = gen_alpha_quad(adj, x_true, spec.diag_c, spec.r, rng=c_rng) if spec.beta == 2 else None
    sim = SimOutcomeSpec(alpha0, lin, spec.theta_vector(), x_true, graph, quad)
    return Population.from_sim(sim, x_obs, spec.beta)


@dataclass
class ReplicateResult:
    rep: int
    estimates: dict[str, float]
    true_tte: float
    failures: dict[str, str] = field(default_factory=dict)
    thetas: dict[str, np.ndarray] = field(default_factory=dict)


def run_replicate(spec: ExperimentSpec, sweep_index: int, rep: int,
                  population: Population | None = None) -> ReplicateResult:
    """Draw (or reuse) a population, assign treatment, and run every estimator."""
    pop = population
    if pop is None:
        pop = make_population(spec, sweep_index, rep)
    z_rng = stream(spec.seed, sweep_index, rep, TAG_TREATMENT)
    z = (z_rng.random(pop.graph.n) < spec.p).astype(np.float64)
    y = pop.outcome(z)
    ds = est.Dataset(z, y, pop.x_obs, pop.graph, Design.uniform(pop.graph.n, spec.p), pop.beta)
    estimates, failures, thetas = {}, {}, {}
    for name in ESTIMATOR_ORDER:
        try:
            report = est.ESTIMATORS[name](ds)
        except (est.EstimationError, np.linalg.LinAlgError, ValueError) as exc:
            estimates[name] = float("nan")
            failures[name] = str(exc)
            continue
        estimates[name] = report.point_estimate
        if report.theta_used is not None:
            thetas[name] = report.theta_used
    return ReplicateResult(rep, estimates, pop.true_tte, failures, thetas)


@dataclass(frozen=True)
class Metrics:
    rel_bias: float
    rel_mse: float
    n_fail: int


def compute_metrics(results: Sequence[ReplicateResult], normalization: str = "abs",
                    names: Iterable[str] | None = None) -> dict[str, Metrics]:
    """Relative bias and relative MSE per estimator, skipping failed replicates."""
    if not results:
        raise ValueError("no replicate results")
    if normalization not in ("abs", "squared"):
        raise ValueError("normalization must be 'abs' or 'squared'")
    names = list(names) if names is not None else list(results[0].estimates)
    tte = np.array([r.true_tte for r in results])
    if np.any(tte == 0):
        raise ZeroDivisionError("true TTE is zero; relative metrics are undefined")
    out = {}
    for name in names:
        vals = np.array([r.estimates.get(name, np.nan) for r in results])
        ok = np.isfinite(vals)
        if not ok.any():
            out[name] = Metrics(float("nan"), float("nan"), int((~ok).sum()))
            continue
        v, t = vals[ok], tte[ok]
        bias = (v.mean() - t.mean()) / t.mean()
        denom = np.abs(t) if normalization == "abs" else t ** 2
        out[name] = Metrics(float(bias), float(np.mean((v - t) ** 2 / denom)), int((~ok).sum()))
    return out


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    sweep_param: str
    sweep_values: list
    results: list[list[ReplicateResult]]
    metrics: list[dict[str, Metrics]]

    def raw_rows(self) -> list[list[str]]:
        rows = []
        for value, reps in zip(self.sweep_values, self.results):
            for r in reps:
                for name in ESTIMATOR_ORDER:
                    rows.append([self.spec.setting, self.sweep_param, _fmt(value), str(r.rep), name,
                                 _fmt(r.estimates[name]), _fmt(r.true_tte)])
        return rows

    def summary_rows(self) -> list[list[str]]:
        rows = []
        for value, mets in zip(self.sweep_values, self.metrics):
            for name in ESTIMATOR_ORDER:
                m = mets[name]
                rows.append([self.spec.setting, self.sweep_param, _fmt(value), name,
                             _fmt(m.rel_bias), _fmt(m.rel_mse), str(m.n_fail)])
        return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _replicate_job(args):
    spec, sweep_index, rep, population = args
    return run_replicate(spec, sweep_index, rep, population)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(spec: ExperimentSpec, sweep_param: str | None = None,
                   sweep_values: Sequence | None = None, threads: int | None = None,
                   progress: Callable[[str], None] | None = None) -> ExperimentResult:
    """Run ``spec.reps`` replicates at every sweep point."""
    threads = default_threads() if threads is None else max(1, int(threads))
    if sweep_param is None or sweep_param == "none":
        sweep_param, sweep_values = "none", [None]
    else:
        if sweep_param not in {f.name for f in dataclasses.fields(ExperimentSpec)}:
            raise ConfigError(f"sweep_param: unknown field {sweep_param!r}")
        if not sweep_values:
            raise ConfigError("sweep_values: need at least one value")
    specs = [spec if v is None else dataclasses.replace(spec, **{sweep_param: v})
             for v in sweep_values]
    all_results, all_metrics = [], []
    pool = ProcessPoolExecutor(threads) if threads > 1 else None
    try:
        for idx, sp in enumerate(specs):
            pop = make_population(sp, idx, 0, fixed=True) if sp.fix_population else None
            jobs = [(sp, idx, rep, pop) for rep in range(sp.reps)]
            if pool is None:
                res = [_replicate_job(j) for j in jobs]
            else:
                res = list(pool.map(_replicate_job, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
            res.sort(key=lambda r: r.rep)
            all_results.append(res)
            all_metrics.append(compute_metrics(res, sp.mse_normalization, ESTIMATOR_ORDER))
            if progress:
                progress(f"{sp.setting} {sweep_param}={_fmt(sweep_values[idx]) or '-'}: "
                         f"{len(res)} replicates done")
    finally:
        if pool is not None:
            pool.shutdown()
    return ExperimentResult(spec, sweep_param, list(sweep_values), all_results, all_metrics)


def write_results(result: ExperimentResult, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw, summary = out / "raw.csv", out / "summary.csv"
    for path, header, rows in ((raw, RAW_HEADER, result.raw_rows()),
                               (summary, SUMMARY_HEADER, result.summary_rows())):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    return raw, summary


def sutva_theta_distances(n: int, reps: int = 200, seed: int = 0, p: float = 0.5,
                          d_x: int = 3, theta_true=None) -> np.ndarray:
    """Distances of the fitted Reg and VIM coefficients from Lin's under no interference.

    Each draw regenerates covariates and coefficients on a self-loop graph;
    returns an array of shape ``(reps, 2)`` holding ``|theta_Reg - theta_Lin|``
    and ``|theta_VIM - theta_Lin|``.
    """
    graph = Graph.self_loops(n)
    adj = graph.adjacency()
    theta = np.full(d_x, DEFAULT_THETA) if theta_true is None else np.asarray(theta_true, float)
    design = Design.uniform(n, p)
    out = np.empty((reps, 2))
    for rep in range(reps):
        x_obs, x_true = gen_covariates(n, d_x, 1.0, stream(seed, 0, rep, TAG_COVARIATES))
        c_rng = stream(seed, 0, rep, TAG_COEFFICIENTS)
        sim = SimOutcomeSpec(c_rng.random(n), gen_alpha_linear(adj, x_true, rng=c_rng), theta,
                             x_true, graph)
        z = (stream(seed, 0, rep, TAG_TREATMENT).random(n) < p).astype(np.float64)
        ds = est.Dataset(z, sim_outcomes(sim, z, 1), x_obs, graph, design, 1)
        lin = est.theta_lin(ds)
        out[rep] = (np.linalg.norm(est.theta_reg(ds) - lin), np.linalg.norm(est.theta_vim(ds) - lin))
    return out


# -- configuration files -----------------------------------------------------

def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _matrix(text: str) -> tuple:
    return tuple(tuple(float(t) for t in row.split(",") if t.strip())
                 for row in text.split(";") if row.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(parse):
    return lambda text: None if text.strip().lower() in ("", "none", "default") else parse(text)


# key -> (parser, description); the README lists the same schema
CONFIG_SCHEMA: dict[str, tuple[Callable[[str], object], str]] = {
    "setting": (str, "ER-b1, ER-b2, SRGG-b1 or SRGG-b2"),
    "n": (int, "number of units"),
    "p": (float, "treatment probability"),
    "r": (float, "ratio of indirect to direct effect scale"),
    "rho": (float, "weight of the observed covariates in the true covariates"),
    "reps": (int, "replicates per sweep point"),
    "seed": (int, "master seed (non-negative, < 2^64)"),
    "sigma": (_optional(float), "soft RGG decay rate (default 0.02, or the n-schedule for SRGG-b2)"),
    "p_edge": (_optional(float), "ER edge probability (default 10/n)"),
    "d_x": (int, "covariate dimension"),
    "psi": (_optional(_matrix), "covariate interaction matrix, rows separated by ';' (default identity)"),
    "diag_c": (float, "direct-effect scale"),
    "theta_true": (_optional(_floats), "covariate effect vector (default 2 in every coordinate)"),
    "mse_normalization": (str, "abs divides by |TTE|, squared by TTE^2"),
    "fix_population": (_bool, "hold covariates, graph and coefficients fixed across replicates"),
    "sweep_param": (str, "ExperimentSpec field to vary, or none"),
    "sweep_values": (_floats, "comma-separated values for the swept field"),
    "threads": (int, "worker processes"),
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for ln_no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{ln_no}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{source}:{ln_no}: unknown key {key!r}")
        out[key] = value
    return out


def build_spec(raw: dict[str, str]) -> tuple[ExperimentSpec, str, list, int | None]:
    """Typed spec plus sweep settings and thread count from raw strings."""
    typed = {}
    for key, value in raw.items():
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{key}: unknown key")
        try:
            typed[key] = CONFIG_SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from None
    sweep_param = typed.pop("sweep_param", "none")
    sweep_values = list(typed.pop("sweep_values", ()))
    threads = typed.pop("threads", None)
    if sweep_param != "none":
        ftype = {f.name: f.type for f in dataclasses.fields(ExperimentSpec)}.get(sweep_param)
        if ftype is None:
            raise ConfigError(f"sweep_param: unknown field {sweep_param!r}")
        if ftype == "int":
            if any(v != int(v) for v in sweep_values):
                raise ConfigError(f"sweep_values: {sweep_param} needs integers")
            sweep_values = [int(v) for v in sweep_values]
        if not sweep_values:
            raise ConfigError("sweep_values: need at least one value")
    try:
        spec = ExperimentSpec(**typed)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return spec, sweep_param, sweep_values, threads


def load_config(path, overrides: Iterable[str] = ()) -> tuple[ExperimentSpec, str, list, int | None]:
    raw = parse_config_text(Path(path).read_text(), str(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, value = (t.strip() for t in item.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"override {item!r}: unknown key {key!r}")
        raw[key] = value
    return build_spec(raw)
