"""Dice / PSNR across a lambda sweep on mean-filled irregular defects."""

import argparse
from pathlib import Path

from rgi.experiments import PLATEAU_LAMBDAS, longest_plateau, plateau_sweep
from rgi.fileio import write_csv

if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs/lambda_plateau")
    p.add_argument("--seeds", type=int, default=1)
    args = p.parse_args()
    Path(args.out).mkdir(parents=True, exist_ok=True)
    rows = []
    for seed in range(args.seeds):
        sweep = plateau_sweep(seed)
        dices = [row["dice"] for _, _, row in sweep]
        rows += [(seed, lam, row["dice"], row["psnr"]) for lam, _, row in sweep]
        print(f"seed {seed}: dice {[round(d, 3) for d in dices]}  plateau length {longest_plateau(dices)}")
    write_csv(Path(args.out) / "sweep.csv", ["seed", "lambda", "dice", "psnr"], rows)
    print("lambdas:", PLATEAU_LAMBDAS)
