"""Tabulate the free thermal kernels and the Matsubara-sum convergence.

    python scripts/kernel_tables.py --beta 1 --mass 1 --out kernels/
"""
import argparse
import math
from pathlib import Path

import numpy as np

from thermal_cylinder.io import write_csv
from thermal_cylinder.spectral import (ModelParams, free_euclidean_propagator, matsubara_covariance,
                                       thermal_covariance_kernel)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--mass", type=float, default=1.0)
    ap.add_argument("--out", type=Path, default=Path("kernels"))
    args = ap.parse_args()
    p = ModelParams(args.mass, args.beta)

    rows = []
    for n_cut in (10, 100, 1000, 10**4, 10**5, 10**6):
        err = abs(matsubara_covariance(0.0, 0.0, p, n_cut) - thermal_covariance_kernel(0.0, p))
        rows.append((n_cut, err, err * n_cut))
        print(f"n_cut={n_cut:>8d}  |error|={err:.3e}  n_cut*error={err * n_cut:.4f}")
    # the tail of the sum behaves like beta / (2 pi^2 n_cut)
    print(f"predicted n_cut*error -> {args.beta / (2 * math.pi**2):.4f}")
    write_csv(args.out / "matsubara_convergence.csv", ("n_cut", "abs_error", "scaled_error"), rows)

    taus = np.linspace(0.05, 0.95, 19) * args.beta
    xs = np.linspace(0.0, 3.0, 13)
    write_csv(args.out / "propagator.csv", ("tau", "x", "value"),
              [(t, x, free_euclidean_propagator(t, x, p)) for t in taus for x in xs])
    print(f"wrote {args.out}/propagator.csv ({taus.size * xs.size} points)")


if __name__ == "__main__":
    main()
