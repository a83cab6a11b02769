"""Local Metropolis sampling of the interacting lattice measure ``e^{-S[phi]}``.

Random numbers come from numpy's PCG64.  Chain ``i`` of a run with seed ``s``
is driven by ``SeedSequence(s, spawn_key=(i,))``; the chain count or thread
count does not change any individual chain.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from numba import njit

from .errors import ActionBlowupError, ParameterError
from .lattice import LatticeSpec, sample_gff
from .spectral import ModelParams
from .stats import EstimatorResult, merge_estimates
from .wick import WickPolynomial

log = logging.getLogger(__name__)

ORDERS = {"lexicographic": 0, "checkerboard": 1}
TUNE_WINDOW = 20
TARGET_ACCEPTANCE = 0.5


@dataclass(frozen=True)
class MCConfig:
    seed: int = 0
    n_therm: int = 1000
    n_sweeps: int = 10_000
    meas_interval: int = 1
    step_width: float = 1.0
    n_chains: int = 1
    order: str = "lexicographic"
    tune: bool = True

    def __post_init__(self):
        if self.step_width < 0:
            raise ParameterError("step_width must be non-negative")
        if self.meas_interval < 1 or self.n_chains < 1 or self.n_sweeps < 0 or self.n_therm < 0:
            raise ParameterError("invalid sweep counts")
        if self.order not in ORDERS:
            raise ParameterError(f"unknown update order {self.order!r}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")


@njit(cache=True, nogil=True)
def _poly(c, x):
    acc = 0.0
    for i in range(c.shape[0] - 1, -1, -1):
        acc = acc * x + c[i]
    return acc


@njit(cache=True, nogil=True)
def _local_delta(phi, i, j, new, a_t, a_x, m2, q):
    n_t, n_x = phi.shape
    old = phi[i, j]
    ct = 1.0 / (a_t * a_t) if n_t > 1 else 0.0
    cx = 1.0 / (a_x * a_x) if n_x > 1 else 0.0
    nt = phi[(i + 1) % n_t, j] + phi[(i - 1) % n_t, j]
    nx = phi[i, (j + 1) % n_x] + phi[i, (j - 1) % n_x]
    d2 = new * new - old * old
    ds = (ct + cx + 0.5 * m2) * d2 - (new - old) * (ct * nt + cx * nx) + _poly(q, new) - _poly(q, old)
    return a_t * a_x * ds


@njit(cache=True, nogil=True)
def _visit(phi, i, j, u_prop, u_acc, width, a_t, a_x, m2, q):
    # returns 1 accepted, 0 rejected, -1 non-finite action change
    new = phi[i, j] + width * (2.0 * u_prop - 1.0)
    ds = _local_delta(phi, i, j, new, a_t, a_x, m2, q)
    if not np.isfinite(ds):
        return -1
    if ds <= 0.0 or u_acc < math.exp(-ds):
        phi[i, j] = new
        return 1
    return 0


@njit(cache=True, nogil=True)
def _sweeps(phi, u_prop, u_acc, width, a_t, a_x, m2, q, order, acc_out):
    """Run ``u_prop.shape[0]`` sweeps in place; per-sweep acceptance into acc_out.

    Returns 0 on success, 1 if a non-finite action change was hit.
    """
    n_t, n_x = phi.shape
    vol = n_t * n_x
    for s in range(u_prop.shape[0]):
        n_acc = 0
        if order == 0:
            for i in range(n_t):
                for j in range(n_x):
                    r = _visit(phi, i, j, u_prop[s, i, j], u_acc[s, i, j], width, a_t, a_x, m2, q)
                    if r < 0:
                        return 1
                    n_acc += r
        else:
            for color in range(2):
                for i in range(n_t):
                    for j in range(n_x):
                        if (i + j) % 2 != color:
                            continue
                        r = _visit(phi, i, j, u_prop[s, i, j], u_acc[s, i, j], width, a_t, a_x, m2, q)
                        if r < 0:
                            return 1
                        n_acc += r
        acc_out[s] = n_acc / vol
    return 0


def local_action_change(cfg, i, j, new, spec: LatticeSpec, m: float, Q: WickPolynomial) -> float:
    """Action difference for setting site (i, j) to ``new``, from the local stencil."""
    return float(_local_delta(np.asarray(cfg, dtype=float), i, j, float(new),
                              spec.a_t, spec.a_x, m * m, Q.as_array()))


def acceptance_probability(delta_s: float) -> float:
    return 1.0 if delta_s <= 0 else math.exp(-delta_s)


def metropolis_sweep(cfg, spec: LatticeSpec, m: float, Q: WickPolynomial,
                     rng: np.random.Generator, step_width: float = 1.0,
                     order: str = "lexicographic") -> tuple[np.ndarray, float]:
    """One pass of single-site updates; returns a new configuration and the acceptance rate."""
    phi = spec.check_config(cfg).copy()
    acc = _run_sweeps(phi, 1, spec, m, Q, rng, step_width, ORDERS[order])
    return phi, float(acc[0])


def _run_sweeps(phi, n, spec, m, Q, rng, width, order):
    u_prop = rng.random((n, *spec.shape))
    u_acc = rng.random((n, *spec.shape))
    acc = np.empty(n)
    status = _sweeps(phi, u_prop, u_acc, float(width), spec.a_t, spec.a_x, m * m, Q.as_array(), order, acc)
    if status:
        raise ActionBlowupError("non-finite action change; check the interaction polynomial")
    return acc


@dataclass
class ChainResult:
    series: dict[str, np.ndarray]
    estimates: dict[str, EstimatorResult]
    acceptance: np.ndarray  # per sweep, thermalization included
    step_width: float
    configs: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n_measurements(self) -> int:
        return next(iter(self.series.values())).shape[0] if self.series else 0


def field_mean(cfg: np.ndarray) -> float:
    return float(cfg.mean())


def field_square(cfg: np.ndarray) -> float:
    return float(np.mean(cfg * cfg))


DEFAULT_OBSERVABLES: dict[str, Callable[[np.ndarray], float]] = {
    "phi": field_mean,
    "phi2": field_square,
}


def chain_seed(seed: int, chain: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(chain,))


def run_chain(params: ModelParams, spec: LatticeSpec, mc: MCConfig, Q: WickPolynomial,
              observables: Mapping[str, Callable] | None = None, chain: int = 0,
              keep_configs: bool = False, keep_stride: int = 1) -> ChainResult:
    """Thermalize (tuning the step width), then measure every ``meas_interval`` sweeps.

    The chain starts from an exact free-field draw.  Scalar observables get an
    ``EstimatorResult``; array-valued ones only a series.  With ``keep_configs``
    every ``keep_stride``-th measured configuration is stored.
    """
    observables = dict(DEFAULT_OBSERVABLES if observables is None else observables)
    rng = np.random.default_rng(chain_seed(mc.seed, chain))
    order = ORDERS[mc.order]
    m = params.mass
    phi = sample_gff(spec, m, rng)
    width = mc.step_width
    acc_log = []
    notes = []

    done = 0
    while done < mc.n_therm:
        n = min(TUNE_WINDOW, mc.n_therm - done)
        acc = _run_sweeps(phi, n, spec, m, Q, rng, width, order)
        acc_log.append(acc)
        done += n
        if mc.tune and width > 0:
            rate = float(acc.mean())
            width *= min(2.0, max(0.5, (rate + 0.05) / (TARGET_ACCEPTANCE + 0.05)))

    n_meas = mc.n_sweeps // mc.meas_interval
    records = {name: [] for name in observables}
    if keep_stride < 1:
        raise ParameterError("keep_stride must be >= 1")
    configs = np.empty((-(-n_meas // keep_stride), *spec.shape)) if keep_configs else None
    for k in range(n_meas):
        acc_log.append(_run_sweeps(phi, mc.meas_interval, spec, m, Q, rng, width, order))
        for name, fn in observables.items():
            records[name].append(fn(phi))
        if keep_configs and k % keep_stride == 0:
            configs[k // keep_stride] = phi

    acceptance = np.concatenate(acc_log) if acc_log else np.empty(0)
    measured = acceptance[mc.n_therm:]
    if measured.size and not 0.1 <= measured.mean() <= 0.9:
        msg = f"acceptance {measured.mean():.3f} outside [0.1, 0.9] (step width {width:.4g})"
        notes.append(msg)
        log.warning(msg)

    series = {name: np.asarray(vals) for name, vals in records.items()}
    estimates = {}
    for name, s in series.items():
        if s.ndim == 1 and s.size >= 100:
            estimates[name] = EstimatorResult.from_series(s, mc.meas_interval)
    return ChainResult(series, estimates, acceptance, width, configs, notes)


def run_chains(params: ModelParams, spec: LatticeSpec, mc: MCConfig, Q: WickPolynomial,
               observables: Mapping[str, Callable] | None = None, threads: int = 1,
               keep_configs: bool = False, keep_stride: int = 1) -> list[ChainResult]:
    """Independent chains, optionally on a thread pool; results are in chain order."""
    def one(i):
        return run_chain(params, spec, mc, Q, observables, chain=i, keep_configs=keep_configs,
                         keep_stride=keep_stride)

    if threads <= 1 or mc.n_chains == 1:
        return [one(i) for i in range(mc.n_chains)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(mc.n_chains)))


def pooled_estimates(chains: list[ChainResult]) -> dict[str, EstimatorResult]:
    names = chains[0].estimates.keys()
    return {
        name: merge_estimates([c.estimates[name] for c in chains], [c.n_measurements for c in chains])
        for name in names
    }
