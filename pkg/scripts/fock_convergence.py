"""Vacuum energy, gap and spectrum-condition margin of the circle oracle versus truncation.

    python scripts/fock_convergence.py --coupling 0.2 --k-max 0 1 2 --n-max 4 6 8
"""
import argparse
import math
import time

from thermal_cylinder.fock import FockBasis, build_hamiltonian, ground_state, spectrum_margin
from thermal_cylinder.spectral import Polynomial


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--coupling", type=float, default=0.2)
    ap.add_argument("--mass", type=float, default=1.0)
    ap.add_argument("--beta", type=float, default=2 * math.pi)
    ap.add_argument("--k-max", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--n-max", type=int, nargs="+", default=[4, 6, 8])
    args = ap.parse_args()
    P = Polynomial.phi4(args.coupling)
    print(f"{'k_max':>5} {'n_max':>5} {'states':>7} {'E_C':>14} {'gap':>10} {'margin':>10} {'sec':>6}")
    for k in args.k_max:
        for n in args.n_max:
            basis = FockBasis(k, n, args.beta, args.mass)
            if basis.dim > 5000:
                print(f"{k:>5} {n:>5} {basis.dim:>7}  skipped: above the dense limit")
                continue
            t0 = time.perf_counter()
            gs = ground_state(build_hamiltonian(basis, P))
            margin = spectrum_margin(P, args.beta, args.mass, k, n)
            print(f"{k:>5} {n:>5} {basis.dim:>7} {gs.energy_0:>14.8f} {gs.gap:>10.6f} {margin:>10.2e} "
                  f"{time.perf_counter() - t0:>6.2f}")


if __name__ == "__main__":
    main()
