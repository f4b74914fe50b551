"""Print the correlation hierarchy along the Werner family.

    python3 scripts/werner_sweep.py --steps 21
"""

import argparse

import numpy as np

from ttqi import classify_hierarchy
from ttqi.oracles import analytic_state


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=11, help="number of weights in [0, 1]")
    args = ap.parse_args()

    print(f"{'p':>5} {'discord':>9} {'Delta_E':>8} {'steering':>9} {'chsh':>6} {'magic':>7}  flags")
    for p in np.linspace(0.0, 1.0, args.steps):
        rep = classify_hierarchy(analytic_state("werner", p=float(p)).fano)
        on = [name for name, flag in rep.flags._asdict().items() if flag]
        print(
            f"{p:5.2f} {rep.discord_top:9.5f} {rep.entanglement_marker:8.4f} "
            f"{rep.steering:9.4f} {rep.chsh:6.3f} {rep.magic:7.4f}  {','.join(on) or '-'}"
        )


if __name__ == "__main__":
    main()
