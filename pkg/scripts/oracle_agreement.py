"""Compare the fast discord and steering paths with brute-force oracles.

Reports per-state gaps so the grid resolution can be judged directly:
a fast value below the lattice value means the lattice was too coarse.

    python3 scripts/oracle_agreement.py --states 50 --grid 20000
"""

import argparse

import numpy as np

from ttqi import discord, steering_marker
from ttqi.oracles import analytic_state, grid_discord, mc_steering


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--states", type=int, default=50)
    ap.add_argument("--grid", type=int, default=20000, help="lattice points for the discord oracle")
    ap.add_argument("--samples", type=int, default=10**6, help="Monte Carlo samples for steering")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    gaps, pulls = [], []
    for k in range(args.states):
        fano = analytic_state("random_physical", seed=args.seed + k).fano
        fast = discord(fano, "top").value
        grid = grid_discord(fano, "top", args.grid)
        est, se = mc_steering(fano.C, args.samples, args.seed + k)
        gaps.append(grid - fast)
        pulls.append((steering_marker(fano.C) - est) / se)

    gaps, pulls = np.array(gaps), np.array(pulls)
    print(f"discord: grid - fast over {args.states} states")
    print(f"  min {gaps.min():.3g}  median {np.median(gaps):.3g}  max {gaps.max():.3g}")
    print(f"  fast above grid by more than 1e-9: {int(np.sum(gaps < -1e-9))}")
    print(f"steering: (quadrature - MC) / SE, max |pull| {np.abs(pulls).max():.2f}")


if __name__ == "__main__":
    main()
