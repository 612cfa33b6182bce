"""Sampling distribution of VIM-SNIPE over treatment draws on one fixed population."""
import argparse

import numpy as np
from scipy import stats

from netsnipe import simharness as sh

ap = argparse.ArgumentParser()
ap.add_argument("--n", type=int, default=5000)
ap.add_argument("--reps", type=int, default=1000)
ap.add_argument("--seed", type=int, default=8)
ap.add_argument("--estimator", default="VIM-SNIPE", choices=sh.ESTIMATOR_ORDER)
args = ap.parse_args()

spec = sh.ExperimentSpec(setting="ER-b1", n=args.n, reps=args.reps, seed=args.seed,
                         fix_population=True)
res = sh.run_experiment(spec)
vals = np.array([r.estimates[args.estimator] for r in res.results[0]])
z = (vals - vals.mean()) / vals.std(ddof=1)
print(f"true TTE {res.results[0][0].true_tte:.5f}  mean {vals.mean():.5f}  sd {vals.std(ddof=1):.5f}")
print(f"normaltest p = {stats.normaltest(z).pvalue:.4f}  skewness = {stats.skew(z):+.4f}  "
      f"excess kurtosis = {stats.kurtosis(z):+.4f}")
qs = np.quantile(z, [0.01, 0.05, 0.5, 0.95, 0.99])
print("quantiles (1,5,50,95,99%):", " ".join(f"{q:+.3f}" for q in qs),
      " normal:", " ".join(f"{q:+.3f}" for q in stats.norm.ppf([0.01, 0.05, 0.5, 0.95, 0.99])))
