"""Compare the Monte Carlo spatial decay rate with the circle-oracle mass gap.

The lattice has thermal extent beta; the zero-Matsubara correlator decays in
x with the lowest energy of the Hamiltonian on a circle of circumference beta.

    python scripts/decay_rate_vs_gap.py --n-t 32 --n-x 64 --sweeps 150000
"""
import argparse
import math
import time

from thermal_cylinder.correlators import binned_two_point, spatial_decay_rate, two_point_estimator
from thermal_cylinder.fock import CircleOracle
from thermal_cylinder.lattice import LatticeSpec, wick_constant
from thermal_cylinder.montecarlo import MCConfig, field_mean, run_chain
from thermal_cylinder.spectral import ModelParams, Polynomial
from thermal_cylinder.wick import wick_order


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--coupling", type=float, default=0.2)
    ap.add_argument("--n-t", type=int, default=32)
    ap.add_argument("--n-x", type=int, default=64)
    ap.add_argument("--sweeps", type=int, default=150_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--fit", type=int, nargs=2, default=(3, 12), metavar=("LO", "HI"))
    args = ap.parse_args()

    beta = 2 * math.pi
    P = Polynomial.phi4(args.coupling)
    gap = CircleOracle(P, beta, 1.0, 2, 8).gap
    print(f"oracle gap (k_max=2, n_max=8): {gap:.5f}")

    a = beta / args.n_t
    spec = LatticeSpec(args.n_t, args.n_x, a, a)
    Q = wick_order(P, wick_constant(spec, 1.0))
    t0 = time.perf_counter()
    r = run_chain(ModelParams(1.0, beta, P, spec.length), spec,
                  MCConfig(seed=args.seed, n_therm=2000, n_sweeps=args.sweeps, meas_interval=4), Q,
                  observables={"S": two_point_estimator, "phi": field_mean})
    g = binned_two_point(r.series["S"], r.series["phi"], spec, connected=True).symmetrize()
    print(f"MC: {args.sweeps} sweeps in {time.perf_counter() - t0:.1f}s, bin size {g.bin_size}, "
          f"acceptance {r.acceptance[-1000:].mean():.2f}")
    for lo, hi in [tuple(args.fit), (2, 8), (4, 16)]:
        if hi >= args.n_x // 2:
            continue
        rate, err = spatial_decay_rate(g, (lo, hi))
        print(f"fit x in [{lo},{hi}]: rate {rate:.4f} +- {err:.4f}  rel diff to gap {rate / gap - 1:+.3f}")


if __name__ == "__main__":
    main()
