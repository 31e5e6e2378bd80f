"""Latent and mask convergence checks on the affine lattice fixture, over several seeds.

Also runs a gross-corruption variant (fill level far outside the image range)
where every corrupted residual clears the masking threshold.
"""

import argparse

from rgi.oracle import STANDARD_LAMBDAS, standard_affine_fixture, verify_theorem1, verify_theorem2

if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--level", type=float, default=1.0)
    args = p.parse_args()
    for level in (args.level, 6.0):
        for seed in range(args.seeds):
            model, sample, lattice = standard_affine_fixture(seed, level=level)
            r1 = verify_theorem1(model, sample, STANDARD_LAMBDAS, lattice)
            r2 = verify_theorem2(model, sample, STANDARD_LAMBDAS)
            d = ", ".join(f"{v:.3g}" for v in r1.distances)
            print(f"level {level:g} seed {seed}: thm1 {'PASS' if r1.passed else 'FAIL'} [{d}]  "
                  f"thm2 {'PASS' if r2.passed else 'FAIL'} hamming {r2.hamming}")
