"""RMSE-vs-corruption-level table for l2 / l1 inversion and RGI.

    python3 scripts/run_simulation.py --out runs/simulation [--full]
"""

import argparse
import sys

from rgi.cli import main

if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs/simulation")
    p.add_argument("--full", action="store_true", help="100 samples per level")
    args = p.parse_args()
    argv = ["simulate", "--out", args.out] + (["--full"] if args.full else [])
    code = main(argv)
    if code == 0:
        print(open(f"{args.out}/simulation.csv").read(), end="")
    sys.exit(code)
