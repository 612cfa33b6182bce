"""Command-line entry point: ``netsnipe {simulate,validate,toy,estimate}``.

Exit codes: 0 success, 1 a validation check failed, 2 bad usage or configuration.
Every command writes ``provenance.json`` (resolved settings, seeds, versions and
the files produced) into its output directory.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import estimators as est
from . import oracle, simharness
from .graph import GraphError, read_graph
from .moments import DesignError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class CommandOutcome:
    code: int
    files: list[Path] = field(default_factory=list)


def _write_provenance(out: Path, command: str, argv: list[str], settings: dict,
                      files: list[Path], started: float) -> Path:
    path = out / "provenance.json"
    doc = {
        "command": command,
        "argv": argv,
        "settings": settings,
        "outputs": [str(f) for f in files],
        "versions": {"netsnipe": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "elapsed_seconds": round(time.time() - started, 3),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _outdir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"--out: cannot create {out}: {exc}") from None
    return out


def _print_table(rows: list[tuple], header: tuple) -> None:
    widths = [max(len(str(r[k])) for r in [header, *rows]) for k in range(len(header))]
    for r in [header, *rows]:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip())


# -- simulate ------------------------------------------------------------------

def cmd_simulate(args, argv) -> CommandOutcome:
    started = time.time()
    overrides = list(args.set or [])
    if args.fix_population:
        overrides.append("fix_population=true")
    try:
        spec, sweep_param, sweep_values, cfg_threads = simharness.load_config(args.config, overrides)
    except OSError as exc:
        raise UsageError(f"--config: {exc}") from None
    threads = args.threads if args.threads is not None else cfg_threads
    if threads is None:
        threads = simharness.default_threads()
    if threads < 1:
        raise UsageError("--threads: must be at least 1")
    out = _outdir(args.out)
    log = (lambda msg: print(msg, file=sys.stderr)) if not args.quiet else None
    result = simharness.run_experiment(spec, sweep_param, sweep_values, threads, log)
    raw, summary = simharness.write_results(result, out)
    _print_table([tuple(r[2:]) for r in result.summary_rows()],
                 ("sweep_value", "estimator", "rel_bias", "rel_mse", "n_fail"))
    settings = {"spec": spec.resolved(), "sweep_param": sweep_param,
                "sweep_values": list(sweep_values), "threads": threads,
                "config_file": str(args.config), "overrides": overrides}
    prov = _write_provenance(out, "simulate", argv, settings, [raw, summary], started)
    return CommandOutcome(EXIT_OK, [raw, summary, prov])


# -- validate ------------------------------------------------------------------

def cmd_validate(args, argv) -> CommandOutcome:
    started = time.time()
    if args.budget > oracle.MAX_ENUM_N or args.budget < 3:
        raise UsageError(f"--budget: must lie in [3, {oracle.MAX_ENUM_N}], got {args.budget}")
    if args.instances < 1:
        raise UsageError("--instances: must be at least 1")
    out = _outdir(args.out)
    results = oracle.run_validation(args.budget, args.instances, args.seed)
    lines = [r.line() for r in results]
    ok = all(r.passed for r in results)
    lines.append(f"overall: {'PASS' if ok else 'FAIL'}")
    print("\n".join(lines))
    report = out / "validate_report.txt"
    report.write_text("\n".join(lines) + "\n")
    summary = out / "validate_summary.json"
    summary.write_text(json.dumps({"passed": ok, "checks": [
        {"name": r.name, "passed": r.passed, "max_error": r.max_error,
         "n_checked": r.n_checked, "detail": r.detail} for r in results]}, indent=2) + "\n")
    settings = {"budget": args.budget, "instances": args.instances, "seed": args.seed,
                "rtol": oracle.RTOL, "atol": oracle.ATOL}
    prov = _write_provenance(out, "validate", argv, settings, [report, summary], started)
    return CommandOutcome(EXIT_OK if ok else EXIT_FAIL, [report, summary, prov])


# -- toy -------------------------------------------------------------------------

def _parse_groups(text: str) -> int:
    body = text.split("=", 1)[1] if text.strip().startswith("m=") else text
    try:
        m = int(body)
    except ValueError:
        raise UsageError(f"--toy-groups: expected an integer or m=<int>, got {text!r}") from None
    if m < 1:
        raise UsageError("--toy-groups: need at least one group")
    return m


def cmd_toy(args, argv) -> CommandOutcome:
    started = time.time()
    out = _outdir(args.out)
    thetas = [1.0, 4 / 3, 2.0] + [t for t in (args.theta or []) if t not in (1.0, 4 / 3, 2.0)]
    rows = oracle.toy_golden(thetas)
    failed = [r.quantity for r in rows if not r.passed]
    table = [(r.quantity, f"{r.value:.12g}", f"{r.expected:.12g}", "ok" if r.passed else "MISMATCH")
             for r in rows]
    _print_table(table, ("quantity", "enumerated", "expected", "status"))
    record = {"rows": [{"quantity": r.quantity, "value": r.value, "expected": r.expected,
                        "passed": r.passed} for r in rows]}
    settings = {"thetas": thetas, "toy_groups": None}
    if args.toy_groups is not None:
        m = _parse_groups(args.toy_groups)
        cmp_ = oracle.toy_block_comparison(m, seed=args.seed)
        settings.update(toy_groups=m, seed=args.seed)
        print(f"\n{m} blocks: Var(SNIPE)={cmp_.var_snipe:.6g}  Var(Reg)={cmp_.var_reg:.6g}  "
              f"Var(VIM)={cmp_.var_vim:.6g}  best random theta={cmp_.best_alternative:.6g}")
        record["groups"] = {k: getattr(cmp_, k) for k in
                            ("m", "var_snipe", "var_reg", "var_vim", "theta_reg", "theta_vim",
                             "best_alternative")}
        record["groups"]["passed"] = cmp_.passed
        if not cmp_.passed:
            failed.append("block ordering Var(VIM) <= Var(SNIPE) < Var(Reg)")
    record["passed"] = not failed
    print("\nPASS" if not failed else "\nFAIL: " + ", ".join(failed))
    result = out / "toy.json"
    result.write_text(json.dumps(record, indent=2) + "\n")
    prov = _write_provenance(out, "toy", argv, settings, [result], started)
    return CommandOutcome(EXIT_FAIL if failed else EXIT_OK, [result, prov])


# -- estimate ----------------------------------------------------------------------

def cmd_estimate(args, argv) -> CommandOutcome:
    started = time.time()
    try:
        names = [est.resolve_estimator(e) for e in args.estimator]
    except KeyError as exc:
        raise UsageError(f"--estimator: {exc.args[0]}") from None
    try:
        graph = read_graph(args.graph)
        ds = est.read_dataset(args.data, graph, args.beta, args.p)
    except (OSError, GraphError, DesignError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = _outdir(args.out)
    records, failed = [], False
    for name in names:
        try:
            rep = est.ESTIMATORS[name](ds)
        except (est.EstimationError, np.linalg.LinAlgError) as exc:
            failed = True
            records.append({"estimator": name, "estimate": None, "error": str(exc)})
            print(f"{name}: failed ({exc})")
            continue
        theta = None if rep.theta_used is None else [float(t) for t in rep.theta_used]
        records.append({"estimator": name, "estimate": rep.point_estimate, "theta": theta,
                        "diagnostics": {k: v for k, v in rep.diagnostics.items()
                                        if isinstance(v, (int, float, str, bool))}})
        print(f"{name}: {rep.point_estimate!r}")
    result = out / "estimates.json"
    result.write_text(json.dumps(records, indent=2) + "\n")
    settings = {"graph": str(args.graph), "data": str(args.data), "beta": args.beta, "p": args.p,
                "estimators": names, "n": graph.n}
    prov = _write_provenance(out, "estimate", argv, settings, [result], started)
    return CommandOutcome(EXIT_FAIL if failed else EXIT_OK, [result, prov])


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="netsnipe", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"netsnipe {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a Monte Carlo experiment from a config file")
    s.add_argument("--config", required=True, help="key = value configuration file")
    s.add_argument("--out", default="results", help="output directory (default: results)")
    s.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    s.add_argument("--threads", type=int, default=None,
                   help=f"worker processes (default: ${simharness.THREADS_ENV} or 1)")
    s.add_argument("--fix-population", action="store_true",
                   help="draw covariates, graph and coefficients once per sweep point")
    s.add_argument("--quiet", action="store_true", help="suppress progress messages")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="run the exact-enumeration property checks")
    v.add_argument("--budget", type=int, default=8, help="largest population enumerated (<= 22)")
    v.add_argument("--instances", type=int, default=100, help="random instances per sweep")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default="results/validate")
    v.set_defaults(func=cmd_validate)

    t = sub.add_parser("toy", help="check the three-unit example against its closed forms")
    t.add_argument("--theta", type=float, action="append",
                   help="extra fixed coefficient to check; repeatable")
    t.add_argument("--toy-groups", metavar="M", help="also compare variances on M disjoint copies")
    t.add_argument("--seed", type=int, default=0, help="seed for the random alternative coefficients")
    t.add_argument("--out", default="results/toy")
    t.set_defaults(func=cmd_toy)

    e = sub.add_parser("estimate", help="point estimates from a graph file and a dataset CSV")
    e.add_argument("--graph", required=True, help="graph file: 'n N' then 'j i' lines (j in N_i)")
    e.add_argument("--data", required=True, help="CSV with unit,z,y,x1..xd[,p]")
    e.add_argument("--beta", type=int, default=1, help="interaction order")
    e.add_argument("--estimator", action="append", default=None,
                   help="DM, Lin, SNIPE, Reg-SNIPE or VIM-SNIPE; repeatable (default: all)")
    e.add_argument("--p", type=float, default=None, help="treatment probability if the CSV has no p")
    e.add_argument("--out", default="results/estimate")
    e.set_defaults(func=cmd_estimate)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "estimator", "") is None:
        args.estimator = list(simharness.ESTIMATOR_ORDER)
    try:
        outcome = args.func(args, argv)
    except (UsageError, simharness.ConfigError, oracle.BudgetError) as exc:
        print(f"netsnipe {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for f in outcome.files:
        print(f"wrote {f}", file=sys.stderr)
    return outcome.code


if __name__ == "__main__":
    sys.exit(main())
