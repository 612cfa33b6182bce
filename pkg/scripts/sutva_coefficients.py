"""Fitted Reg/VIM coefficients against Lin's under no interference, as n doubles."""
import argparse

import numpy as np

from netsnipe.simharness import sutva_theta_distances

ap = argparse.ArgumentParser()
ap.add_argument("--n", type=int, nargs="+", default=[2500, 5000, 10000])
ap.add_argument("--reps", type=int, default=200)
ap.add_argument("--seed", type=int, default=6)
args = ap.parse_args()

print("n,median_reg_minus_lin,median_vim_minus_lin")
for n in args.n:
    med = np.median(sutva_theta_distances(n, args.reps, args.seed), axis=0)
    print(f"{n},{med[0]:.5f},{med[1]:.5f}", flush=True)
