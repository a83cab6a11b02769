"""Command-line front end.

Subcommands::

    kernels         tabulate free thermal kernels to CSV
    simulate        run Monte Carlo from a manifest and evaluate the checks
    correlate       re-estimate correlators and checks from a run's samples.bin
    nelson-compare  compare correlators of two runs on transposed lattices
    oracle          exact diagonalization of the circle Hamiltonian
    report          print a run's verdicts

Exit status is 0 iff every requested verdict is PASS, 1 if some verdict is
not, 2 for usage errors and 3 for invalid manifests, configs or inputs.

Randomness: chain ``i`` of a run with seed ``s`` uses
``numpy.random.SeedSequence(s, spawn_key=(i,))``.  The OS-positivity bootstrap
uses ``s`` directly.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .correlators import (CheckReport, CorrelatorGrid, clustering_check, kms_periodicity_check,
                          nelson_symmetry_check, os_positivity_check, pooled_two_point,
                          two_point_estimator)
from .errors import DimensionError, ManifestError, ParameterError
from .fock import (CircleOracle, SpectrumReport, joint_spectral_support_check, spectrum_condition_check,
                   truncation_drift)
from .io import (RunManifest, atomic_write, csv_text, ini_value, json_text, load_ini, read_configs,
                 read_correlator_csv, read_manifest, write_configs, write_correlator_csv,
                 write_estimates_csv, write_manifest)
from .lattice import wick_constant
from .montecarlo import field_mean, field_square, pooled_estimates, run_chains
from .spectral import (ModelParams, Polynomial, free_euclidean_propagator, free_wightman,
                       matsubara_covariance, momentum_covariance)
from .wick import wick_order

THREADS_ENV = "THERMAL_CYLINDER_THREADS"
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3


class UsageError(Exception):
    pass


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    return 1


# --- pipeline ------------------------------------------------------------

@dataclass
class RunResult:
    manifest: RunManifest
    samples: np.ndarray
    grid: CorrelatorGrid
    estimates: dict
    reports: list
    warnings: list


def evaluate_checks(grid: CorrelatorGrid, checks, seed: int) -> list[CheckReport]:
    """Run the enabled checks on a raw (unsymmetrized, full) correlator grid."""
    out = []
    for name in checks:
        if name == "kms":
            out.append(kms_periodicity_check(grid))
        elif name == "os":
            out.append(os_positivity_check(grid.symmetrize(), seed=seed))
        elif name == "clustering":
            out.append(clustering_check(grid.with_connected().symmetrize()))
    return out


def simulate_run(manifest: RunManifest, threads: int = 1) -> RunResult:
    model, spec, mc = manifest.model, manifest.lattice, manifest.mc
    Q = wick_order(model.poly, wick_constant(spec, model.mass))
    observables = {"phi": field_mean, "phi2": field_square, "S": two_point_estimator}
    chains = run_chains(model, spec, mc, Q, observables, threads=threads, keep_configs=True,
                        keep_stride=manifest.sample_stride)
    grid = pooled_two_point([c.series["S"] for c in chains], [c.series["phi"] for c in chains], spec)
    reports = evaluate_checks(grid, manifest.checks, mc.seed)
    samples = np.concatenate([c.configs for c in chains])
    notes = [f"chain {i}: {w}" for i, c in enumerate(chains) for w in c.warnings]
    return RunResult(manifest, samples, grid, pooled_estimates(chains), reports, notes)


def verdict_summary(reports, **extra) -> dict:
    items = [r.to_dict() for r in reports]
    return {"all_pass": all(r["verdict"] == "PASS" for r in items), "checks": items, **extra}


def report_text(title: str, header: dict, summary: dict, tables: str = "") -> str:
    lines = [title, "=" * len(title)]
    lines += [f"{k}: {v}" for k, v in header.items()]
    lines.append("")
    for c in summary["checks"]:
        lines.append(f"{c['name']:<24} {c['verdict']:<13} statistic={c['statistic']} threshold={c['threshold']}")
    lines.append(f"overall: {'PASS' if summary['all_pass'] else 'FAIL'}")
    if tables:
        lines += ["", tables.rstrip()]
    return "\n".join(lines) + "\n"


def _exit_code(summary: dict) -> int:
    return EXIT_OK if summary["all_pass"] else EXIT_FAIL


def _load_manifest(args) -> RunManifest:
    if not args.config:
        raise UsageError("--config is required")
    man = read_manifest(args.config)
    if args.seed is not None:
        man = man.with_seed(args.seed)
    return man


def _write_run(out: Path, man: RunManifest, grid: CorrelatorGrid, reports, estimates=None,
               warnings=()) -> dict:
    summary = verdict_summary(reports, manifest_hash=man.manifest_hash, code_version=man.code_version,
                              n_bins=grid.n_bins, bin_size=grid.bin_size)
    write_correlator_csv(out / "correlator.csv", grid)
    if estimates:
        write_estimates_csv(out / "observables.csv", estimates)
    atomic_write(out / "verdicts.json", json_text(summary))
    header = {"manifest_hash": man.manifest_hash, "code_version": man.code_version,
              "lattice": f"{man.lattice.n_t} x {man.lattice.n_x}, a_t={man.lattice.a_t}, a_x={man.lattice.a_x}",
              "samples": grid.n_samples, "bin_size": grid.bin_size}
    tables = ""
    if estimates:
        tables = csv_text(("observable", "mean", "std_error", "tau_int", "n_eff"),
                          [(k, e.mean, e.std_error, e.tau_int, e.n_eff) for k, e in estimates.items()])
    if warnings:
        tables += "\nwarnings:\n" + "\n".join(warnings) + "\n"
    atomic_write(out / "report.txt", report_text("simulation report", header, summary, tables))
    return summary


# --- subcommands ---------------------------------------------------------

def cmd_simulate(args) -> int:
    man = _load_manifest(args)
    out = Path(args.output or "run")
    res = simulate_run(man, resolve_threads(args.threads))
    write_manifest(out / "manifest.toml", man)
    write_configs(out / "samples.bin", res.samples)
    summary = _write_run(out, man, res.grid, res.reports, res.estimates, res.warnings)
    print((out / "report.txt").read_text(), end="")
    return _exit_code(summary)


def cmd_correlate(args) -> int:
    run = Path(args.run or args.output or "run")
    man = read_manifest(run / "manifest.toml")
    samples = read_configs(run / "samples.bin")
    n_chains = man.mc.n_chains
    if samples.shape[0] % n_chains:
        raise ManifestError("samples.bin does not split evenly into the manifest's chains")
    per_chain = np.split(samples, n_chains)
    grid = pooled_two_point([two_point_estimator(c) for c in per_chain],
                            [c.mean(axis=(1, 2)) for c in per_chain], man.lattice)
    reports = evaluate_checks(grid, man.checks, man.mc.seed)
    out = Path(args.output) if args.output else run
    summary = _write_run(out, man, grid, reports)
    print((out / "report.txt").read_text(), end="")
    return _exit_code(summary)


def _grid_from_run(run: Path) -> CorrelatorGrid:
    man = read_manifest(run / "manifest.toml")
    s, e = read_correlator_csv(run / "correlator.csv")
    # the bin count sets the degrees of freedom of the comparison
    n_bins = json.loads((run / "verdicts.json").read_text()).get("n_bins", 0)
    return CorrelatorGrid(s, e, spec=man.lattice, n_bins=int(n_bins))


def cmd_nelson_compare(args) -> int:
    if len(args.runs) != 2:
        raise UsageError("nelson-compare takes exactly two run directories")
    a, b = (_grid_from_run(Path(r)) for r in args.runs)
    rep = nelson_symmetry_check(a, b)
    summary = verdict_summary([rep])
    text = report_text("nelson comparison", {"run_a": args.runs[0], "run_b": args.runs[1]}, summary)
    if args.output:
        out = Path(args.output)
        atomic_write(out / "verdicts.json", json_text(summary))
        atomic_write(out / "report.txt", text)
    print(text, end="")
    return _exit_code(summary)


def cmd_oracle(args) -> int:
    if not args.config:
        raise UsageError("--config is required")
    cp = load_ini(args.config)
    mass = float(ini_value(cp, "model", "mass"))
    beta = float(ini_value(cp, "model", "beta"))
    P = Polynomial(tuple(float(c) for c in ini_value(cp, "model", "P", [0.0])))
    k_max = int(ini_value(cp, "oracle", "k_max"))
    n_max = int(ini_value(cp, "oracle", "n_max"))
    k_smear = int(ini_value(cp, "oracle", "smearing", k_max))
    scale = float(ini_value(cp, "oracle", "momentum_scale", 1.0))
    ts = [float(v) for v in ini_value(cp, "oracle", "t", [0.0])]
    ys = [float(v) for v in ini_value(cp, "oracle", "y", [1.0])]

    orc = CircleOracle(P, beta, mass, k_max, n_max)
    drift = 0.0 if P.is_zero or n_max <= 2 else truncation_drift(P, beta, mass, k_max, n_max)
    tol = 1e-10 + drift
    reports: list[SpectrumReport] = [spectrum_condition_check(orc.H, orc.P_op * scale, tol)]
    psi = orc.smeared_state(k_smear)
    eig = replace(orc.eig, momenta=orc.eig.momenta * scale)
    reports.append(joint_spectral_support_check(eig, psi, tol))
    dicts = [r.to_dict() for r in reports]
    summary = {"all_pass": all(d["verdict"] == "PASS" for d in dicts), "checks": dicts,
               "basis_size": orc.basis.dim, "E_C": orc.vacuum.energy_0, "gap": orc.gap,
               "truncation_drift": drift, "code_version": __version__}
    rows = [(t, y, float(orc.two_point(t, y, k_smear).real)) for t in ts for y in ys]
    table = csv_text(("t", "y", "value"), rows)
    header = {"basis_size": orc.basis.dim, "k_max": k_max, "n_max": n_max, "E_C": repr(orc.vacuum.energy_0),
              "E_0": 0.0, "gap": repr(orc.gap), "truncation_drift": repr(drift)}
    text = report_text("circle oracle report", header, summary, table)
    if args.output:
        out = Path(args.output)
        atomic_write(out / "verdicts.json", json_text(summary))
        atomic_write(out / "two_point.csv", table)
        atomic_write(out / "report.txt", text)
    print(text, end="")
    return _exit_code(summary)


def cmd_report(args) -> int:
    run = Path(args.run or args.output or "run")
    summary = json.loads((run / "verdicts.json").read_text())
    text_path = run / "report.txt"
    if text_path.exists():
        print(text_path.read_text(), end="")
    else:
        print(report_text("report", {}, summary), end="")
    return _exit_code(summary)


def _kernel_grid(args, cp, name, default=None):
    flag = getattr(args, name)
    if flag is not None:
        return [float(v) for v in flag]
    if cp is not None:
        return [float(v) for v in ini_value(cp, "kernels", name, default if default is not None else [])]
    return list(default) if default is not None else None


def cmd_kernels(args) -> int:
    cp = load_ini(args.config) if args.config else None
    beta = args.beta if args.beta is not None else (ini_value(cp, "model", "beta") if cp else None)
    mass = args.mass if args.mass is not None else (ini_value(cp, "model", "mass") if cp else None)
    if beta is None or mass is None:
        raise UsageError("--beta and --mass are required")
    params = ModelParams(float(mass), float(beta))
    ks = _kernel_grid(args, cp, "k")
    if not ks:
        raise UsageError("empty momentum grid: pass at least one --k value")
    taus = _kernel_grid(args, cp, "tau", [0.0])
    xs = _kernel_grid(args, cp, "x", [])
    ts = _kernel_grid(args, cp, "t", [])
    if not taus:
        raise UsageError("empty tau grid")

    files = {}
    files["covariance.csv"] = csv_text(("k", "tau", "value"),
                                       [(k, tau, momentum_covariance(k, tau, params)) for k in ks for tau in taus])
    if args.matsubara:
        files["matsubara.csv"] = csv_text(
            ("k", "tau", "value"),
            [(k, tau, matsubara_covariance(k, tau, params, args.matsubara)) for k in ks for tau in taus])
    if xs:
        pos_taus = [t for t in taus if 0 < t < params.beta]
        if not pos_taus:
            raise UsageError("position-space propagator needs tau in (0, beta)")
        files["propagator.csv"] = csv_text(
            ("tau", "x", "value"),
            [(tau, x, free_euclidean_propagator(tau, x, params)) for tau in pos_taus for x in xs])
    if ts:
        rows = []
        for t in ts:
            for x in xs or [1.0]:
                w = free_wightman(t, x, params)
                rows.append((t, 0.0, x, w.real, w.imag))
        files["wightman.csv"] = csv_text(("t_re", "t_im", "x", "w_re", "w_im"), rows)
    if args.output:
        for name, text in files.items():
            atomic_write(Path(args.output) / name, text)
    print(files["covariance.csv"], end="")
    return EXIT_OK


# --- argument parsing ----------------------------------------------------

def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="manifest or config file")
    common.add_argument("--seed", type=_u64, help="override the manifest seed")
    common.add_argument("--threads", type=int, help=f"parallel chains (fallback: ${THREADS_ENV})")
    common.add_argument("--output", help="output directory")

    p = argparse.ArgumentParser(prog="thermal-cylinder", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernels", parents=[common], help="tabulate free kernels")
    k.add_argument("--beta", type=float)
    k.add_argument("--mass", type=float)
    k.add_argument("--k", nargs="*", type=float)
    k.add_argument("--tau", nargs="*", type=float)
    k.add_argument("--x", nargs="*", type=float)
    k.add_argument("--t", nargs="*", type=float)
    k.add_argument("--matsubara", type=int, default=0, help="also tabulate the truncated Matsubara sum")
    k.set_defaults(func=cmd_kernels)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo run from a manifest")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("correlate", parents=[common], help="re-estimate from stored samples")
    c.add_argument("run", nargs="?")
    c.set_defaults(func=cmd_correlate)

    n = sub.add_parser("nelson-compare", parents=[common], help="compare transposed runs")
    n.add_argument("runs", nargs="*")
    n.set_defaults(func=cmd_nelson_compare)

    o = sub.add_parser("oracle", parents=[common], help="circle Hamiltonian oracle")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("report", parents=[common], help="print verdicts of a run")
    r.add_argument("run", nargs="?")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except (ManifestError, FileNotFoundError, ParameterError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
