"""False-alarm calibration of the KMS check on the free theory across seeds.

Each seed runs the free-field pipeline; the fraction of FAIL verdicts should
stay near the nominal family-wise level of a 3 sigma test (0.27%).

    python scripts/kms_calibration.py --seeds 20
"""
import argparse

from thermal_cylinder.cli import simulate_run
from thermal_cylinder.io import RunManifest
from thermal_cylinder.lattice import LatticeSpec
from thermal_cylinder.montecarlo import MCConfig
from thermal_cylinder.spectral import ModelParams, Polynomial


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--size", type=int, default=16)
    ap.add_argument("--sweeps", type=int, default=20_000)
    args = ap.parse_args()
    lat = LatticeSpec(args.size, args.size, 0.25, 0.25)
    base = RunManifest(ModelParams(1.0, lat.beta, Polynomial(), lat.length), lat,
                       MCConfig(n_therm=500, n_sweeps=args.sweeps, meas_interval=5), checks=("kms",))
    fails = 0
    for seed in range(1, args.seeds + 1):
        rep = simulate_run(base.with_seed(seed)).reports[0]
        fails += not rep.passed
        print(f"seed {seed:>3}: {rep.verdict:<5} max t {rep.statistic:.3f}  threshold {rep.threshold:.3f}")
    print(f"{fails}/{args.seeds} failures")


if __name__ == "__main__":
    main()
