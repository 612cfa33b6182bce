"""Run every config in configs/ (or the ones named) through `netsnipe simulate`.

    python3 scripts/run_settings.py                 # all configs, full replicate counts
    python3 scripts/run_settings.py er_b1 --reps 50 # quick look
"""
import argparse
import sys
from pathlib import Path

from netsnipe import cli

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*", help="config stems; default all")
    ap.add_argument("--reps", type=int, help="override replicate count")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out", default=str(ROOT / "results"))
    args = ap.parse_args()
    configs = sorted((ROOT / "configs").glob("*.cfg"))
    if args.names:
        configs = [c for c in configs if c.stem in args.names]
    worst = 0
    for cfg in configs:
        print(f"== {cfg.stem}", flush=True)
        argv = ["simulate", "--config", str(cfg), "--out", str(Path(args.out) / cfg.stem)]
        if args.reps:
            argv += ["--set", f"reps={args.reps}"]
        if args.threads:
            argv += ["--threads", str(args.threads)]
        worst = max(worst, cli.main(argv))
    return worst


if __name__ == "__main__":
    sys.exit(main())
