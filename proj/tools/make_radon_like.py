"""Writes data/radon_like.csv, a synthetic stand-in for the county radon data.

85 groups with a fixed size profile (919 observations, sizes 1 to 116, three
groups of size 1).  Group means are drawn from N(1.313, 0.096) and group
variances from an inverse-gamma with mean 0.637; observations are normal.
"""

import argparse
import csv
import pathlib

import numpy as np

SIZES = [4, 52, 3, 7, 4, 3, 13, 4, 10, 6, 5, 4, 6, 14, 4, 2, 4, 12, 63, 3, 9, 6,
         2, 9, 14, 105, 6, 5, 3, 11, 5, 4, 4, 3, 7, 2, 9, 4, 5, 4, 8, 1, 9, 7,
         13, 5, 2, 9, 13, 1, 4, 3, 3, 23, 8, 3, 6, 4, 4, 2, 32, 5, 3, 11, 2, 14,
         13, 8, 4, 116, 25, 10, 2, 4, 4, 4, 7, 5, 4, 46, 3, 1, 13, 13, 2]

MU, TAU2, SIGMA2, SHAPE = 1.313, 0.096, 0.637, 4.0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20131)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "radon_like.csv"))
    args = ap.parse_args()
    assert len(SIZES) == 85 and sum(SIZES) == 919

    rng = np.random.default_rng(args.seed)
    theta = rng.normal(MU, np.sqrt(TAU2), size=len(SIZES))
    # 1/sigma^2 ~ gamma(SHAPE, rate = SIGMA2 (SHAPE - 1)), so E[sigma^2] = SIGMA2
    sigma2 = 1.0 / rng.gamma(SHAPE, 1.0 / (SIGMA2 * (SHAPE - 1.0)), size=len(SIZES))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "value"])
        for j, n in enumerate(SIZES):
            for y in rng.normal(theta[j], np.sqrt(sigma2[j]), size=n):
                w.writerow([f"g{j + 1:02d}", repr(float(y))])


if __name__ == "__main__":
    main()
