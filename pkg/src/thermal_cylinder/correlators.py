"""Schwinger two-point estimation and structural checks on Monte Carlo data.

Every check returns a ``CheckReport`` whose verdict is a deterministic
function of the data (bootstrap resampling uses a fixed seed).  Multiple
comparisons over grid points use a Bonferroni-corrected threshold whose
family-wise level equals a single two-sided 3 sigma test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy import optimize, stats as sps

from .errors import DimensionError, InsufficientDataError, InsufficientVarianceError
from .lattice import LatticeSpec
from .stats import autocorrelation, bin_series, jackknife

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"
MIN_SAMPLES = 100
MIN_BINS = 32
BIN_TAU_FACTOR = 6.0


def two_point_estimator(cfg: np.ndarray) -> np.ndarray:
    """Translation-averaged ``mean_p phi(p) phi(p + D)`` for one or many configurations."""
    cfg = np.asarray(cfg, dtype=float)
    shape = cfg.shape[-2:]
    f = np.fft.rfft2(cfg)
    return np.fft.irfft2(f.real**2 + f.imag**2, s=shape) / (shape[0] * shape[1])


def two_point_direct(cfg: np.ndarray) -> np.ndarray:
    """O(V^2) reference for ``two_point_estimator``."""
    n_t, n_x = cfg.shape
    out = np.zeros((n_t, n_x))
    for dt in range(n_t):
        for dx in range(n_x):
            out[dt, dx] = np.mean(cfg * np.roll(np.roll(cfg, -dt, axis=0), -dx, axis=1))
    return out


def _reflect(a: np.ndarray, axis: int) -> np.ndarray:
    # a[..., -i mod n, ...]
    n = a.shape[axis]
    return np.take(a, (-np.arange(n)) % n, axis=axis)


@dataclass
class CorrelatorGrid:
    """Estimate of ``S(dt, dx) = <phi(0, 0) phi(dt, dx)>`` in lattice units.

    ``bins`` holds block means of the per-configuration estimator (and
    ``mean_bins`` of the volume-averaged field) so that derived quantities get
    jackknife/bootstrap errors.  Exact grids have ``bins = None`` and zero errors.
    """

    s: np.ndarray
    err: np.ndarray
    connected: bool = False
    spec: LatticeSpec | None = None
    bins: np.ndarray | None = None
    mean_bins: np.ndarray | None = None
    bin_size: int = 0
    n_samples: int = 0
    symmetrized: bool = False
    n_bins: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.s.shape

    @classmethod
    def from_exact(cls, kernel: np.ndarray, spec: LatticeSpec | None = None) -> "CorrelatorGrid":
        k = np.asarray(kernel, dtype=float)
        return cls(k.copy(), np.zeros_like(k), spec=spec)

    @classmethod
    def from_bins(cls, bins, mean_bins=None, connected=False, **kw) -> "CorrelatorGrid":
        bins = np.asarray(bins, dtype=float)
        if connected:
            if mean_bins is None:
                raise ValueError("connected correlator needs field-mean bins")
            packed = np.concatenate([bins.reshape(bins.shape[0], -1), mean_bins[:, None]], axis=1)
            shape = bins.shape[1:]
            s, err = jackknife(packed, lambda v: v[:-1].reshape(shape) - v[-1] ** 2)
        else:
            s = bins.mean(axis=0)
            err = bins.std(axis=0, ddof=1) / math.sqrt(bins.shape[0])
        kw.setdefault("n_bins", bins.shape[0])
        return cls(np.asarray(s), np.asarray(err), connected, bins=bins, mean_bins=mean_bins, **kw)

    def _rebuilt(self, bins, mean_bins=None, **changes) -> "CorrelatorGrid":
        mb = self.mean_bins if mean_bins is None else mean_bins
        if bins is None:
            return replace(self, **changes)
        kw = dict(spec=self.spec, bin_size=self.bin_size, n_samples=self.n_samples,
                  symmetrized=self.symmetrized)
        kw.update(changes)
        return CorrelatorGrid.from_bins(bins, mb, self.connected, **kw)

    def symmetrize(self) -> "CorrelatorGrid":
        """Average over the reflections ``dt -> -dt`` and ``dx -> -dx``."""
        def sym(a):
            return 0.25 * (a + _reflect(a, -2) + _reflect(a, -1) + _reflect(_reflect(a, -2), -1))

        if self.bins is None:
            return replace(self, s=sym(self.s), err=sym(self.err), symmetrized=True)
        return self._rebuilt(sym(self.bins), symmetrized=True)

    def with_connected(self) -> "CorrelatorGrid":
        if self.connected:
            return self
        if self.bins is None:
            return replace(self, connected=True)
        return CorrelatorGrid.from_bins(self.bins, self.mean_bins, True, spec=self.spec,
                                        bin_size=self.bin_size, n_samples=self.n_samples,
                                        symmetrized=self.symmetrized)

    def to_rows(self):
        n_t, n_x = self.shape
        for dt in range(n_t):
            for dx in range(n_x):
                yield dt, dx, float(self.s[dt, dx]), float(self.err[dt, dx])


def choose_bin_size(per_sample: np.ndarray, field_means: np.ndarray) -> int:
    """Block length of ``6 tau_int`` (slowest of S(0,0) and the field mean), at least 32 bins."""
    n = per_sample.shape[0]
    taus = [0.5]
    for series in (per_sample[:, 0, 0], field_means):
        try:
            taus.append(autocorrelation(series))
        except InsufficientVarianceError:
            pass
    size = max(1, math.ceil(BIN_TAU_FACTOR * max(taus)))
    return max(1, min(size, n // MIN_BINS))


def schwinger_two_point(samples, spec: LatticeSpec | None = None, connected: bool = False,
                        bin_size: int | None = None, min_samples: int = MIN_SAMPLES) -> CorrelatorGrid:
    """Binned estimate of the lattice Schwinger function from a series of configurations."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3:
        raise DimensionError("samples must have shape (n_samples, n_t, n_x)")
    if spec is not None:
        spec.check_config(samples)
    n = samples.shape[0]
    if n < min_samples:
        raise InsufficientDataError(f"need at least {min_samples} samples, got {n}")
    return binned_two_point(two_point_estimator(samples), samples.mean(axis=(1, 2)), spec,
                            connected, bin_size)


def binned_two_point(per_sample, means, spec: LatticeSpec | None = None, connected: bool = False,
                     bin_size: int | None = None) -> CorrelatorGrid:
    """Same as :func:`schwinger_two_point` from per-configuration estimates and field means."""
    per_sample = np.asarray(per_sample, dtype=float)
    means = np.asarray(means, dtype=float)
    n = per_sample.shape[0]
    if per_sample.ndim != 3 or means.shape != (n,):
        raise DimensionError("need estimates shaped (n, n_t, n_x) and n field means")
    if bin_size is None:
        bin_size = choose_bin_size(per_sample, means)
    return CorrelatorGrid.from_bins(bin_series(per_sample, bin_size), bin_series(means, bin_size),
                                    connected, spec=spec, bin_size=bin_size, n_samples=n)


def pooled_two_point(per_sample_list, means_list, spec: LatticeSpec | None = None,
                     connected: bool = False) -> CorrelatorGrid:
    """Pool independent chains: common bin size (the largest any chain needs), bins concatenated."""
    per_sample_list = [np.asarray(p, dtype=float) for p in per_sample_list]
    means_list = [np.asarray(m, dtype=float) for m in means_list]
    size = max(choose_bin_size(p, m) for p, m in zip(per_sample_list, means_list))
    bins = np.concatenate([bin_series(p, size) for p in per_sample_list])
    mbins = np.concatenate([bin_series(m, size) for m in means_list])
    n = sum(p.shape[0] for p in per_sample_list)
    return CorrelatorGrid.from_bins(bins, mbins, connected, spec=spec, bin_size=size, n_samples=n)


def bonferroni_threshold(n_points: int, sigma: float = 3.0, dof: int | None = None) -> float:
    """Per-point threshold keeping the family-wise two-sided level of one ``sigma`` test.

    With ``dof`` the scores are Student-t (errors estimated from ``dof + 1``
    bins) and the quantile is taken from that distribution.
    """
    level = sps.norm.sf(sigma) / max(n_points, 1)
    if dof is None:
        return sigma if n_points <= 1 else float(sps.norm.isf(level))
    return float(sps.t.isf(level, dof))


@dataclass(frozen=True)
class CheckReport:
    name: str
    verdict: str
    statistic: float
    threshold: float
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        return {"name": self.name, "verdict": self.verdict, "statistic": _plain(self.statistic),
                "threshold": _plain(self.threshold), "details": {k: _plain(v) for k, v in self.details.items()}}


def _plain(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (tuple, list, np.ndarray)):
        return [_plain(x) for x in v]
    return v


def _exact_floor(grid: CorrelatorGrid) -> float:
    return 1e-12 * max(abs(float(grid.s[0, 0])), 1e-300)


def _standardized(diff: np.ndarray, err: np.ndarray, floor: float):
    """z-scores; entries with (numerically) zero error are exact comparisons."""
    exact = err <= floor
    z = np.zeros_like(diff)
    z[~exact] = np.abs(diff[~exact]) / err[~exact]
    z[exact & (np.abs(diff) > floor)] = np.inf
    return z, int(np.count_nonzero(~exact))


def kms_periodicity_check(raw: CorrelatorGrid, grid: CorrelatorGrid | None = None) -> CheckReport:
    """Compare ``S(tau, x)`` with ``S(beta - tau, x)`` on the unsymmetrized estimate.

    The error of each difference is taken from the binned difference series,
    so the strong correlation between the two entries is accounted for.
    """
    if raw.symmetrized:
        raise ValueError("KMS check needs the raw (unsymmetrized) estimator")
    n_t = raw.shape[0]
    taus = np.array([t for t in range(1, n_t) if t < n_t - t], dtype=int)
    details: dict[str, Any] = {}
    if taus.size == 0:
        return CheckReport("kms_periodicity", INCONCLUSIVE, math.nan, math.nan, {"reason": "n_t < 3"})
    if raw.bins is None:
        diff = raw.s[taus] - raw.s[n_t - taus]
        err = np.zeros_like(diff)
        dof = None
    else:
        d = raw.bins[:, taus] - raw.bins[:, n_t - taus]
        diff = d.mean(axis=0)
        err = d.std(axis=0, ddof=1) / math.sqrt(d.shape[0])
        dof = d.shape[0] - 1
    z, n_tested = _standardized(diff, err, _exact_floor(raw))
    thr = bonferroni_threshold(n_tested, dof=dof)
    worst = np.unravel_index(int(np.argmax(z)), z.shape)
    details.update(max_abs_diff=float(np.max(np.abs(diff))), n_points=int(z.size), n_tested=n_tested,
                   worst_tau=int(taus[worst[0]]), worst_x=int(worst[1]))
    if grid is not None:
        details["symmetrized_max_asymmetry"] = float(np.max(np.abs(grid.s - _reflect(grid.s, 0))))
    stat = float(np.max(z))
    return CheckReport("kms_periodicity", PASS if stat < thr else FAIL, stat, thr, details)


def os_matrix(s: np.ndarray) -> np.ndarray:
    """Reflection matrix ``M_ij = S(tau_i + tau_j, 0)``, ``tau_i = 1 .. n_t // 4``."""
    n_t = s.shape[-2]
    k = n_t // 4
    if k < 1:
        raise DimensionError("need n_t >= 4 for the OS matrix")
    idx = np.arange(1, k + 1)
    return s[..., idx[:, None] + idx[None, :], 0]


def os_positivity_check(grid: CorrelatorGrid, n_boot: int = 1000, seed: int = 0) -> CheckReport:
    """Two-point reflection positivity: the matrix ``S(tau_i + tau_j, 0)`` must be PSD."""
    m = os_matrix(grid.s)
    min_eig = float(np.linalg.eigvalsh(m)[0])
    if grid.bins is None:
        err = 0.0
        ok = min_eig >= -_exact_floor(grid)
    else:
        rng = np.random.default_rng(seed)
        nb = grid.bins.shape[0]
        idx = rng.integers(0, nb, size=(n_boot, nb))
        boot = np.array([np.linalg.eigvalsh(os_matrix(grid.bins[i].mean(axis=0)))[0] for i in idx])
        err = float(np.std(boot, ddof=1))
        ok = min_eig > -3.0 * err
    details = {"min_eigenvalue": min_eig, "error": err, "matrix_size": int(m.shape[0]),
               "eigenvalues": np.linalg.eigvalsh(m)}
    return CheckReport("os_positivity", PASS if ok else FAIL, min_eig, -3.0 * err, details)


def _log_slope(x: np.ndarray, y: np.ndarray, w: np.ndarray | None = None) -> float:
    ly = np.log(np.abs(y))
    if w is None:
        slope = np.polyfit(x, ly, 1)[0]
    else:
        slope = np.polyfit(x, ly, 1, w=w)[0]
    return float(-slope)


def clustering_check(grid: CorrelatorGrid, window: tuple[int, int] | None = None) -> CheckReport:
    """Fit the decay rate of ``|S_conn(0, x)|`` on ``x in [L/8, L/4]`` (lattice units).

    The rate is reported per lattice spacing and, when the grid carries a
    spec, in physical units.  INCONCLUSIVE when any point in the window is
    within two standard errors of zero.
    """
    if not grid.connected:
        raise ValueError("clustering check needs the connected correlator")
    n_x = grid.shape[1]
    lo, hi = window if window else (math.ceil(n_x / 8), n_x // 4)
    xs = np.arange(lo, hi + 1)
    if xs.size < 2:
        raise DimensionError("clustering window needs at least two points")
    y = grid.s[0, xs]
    e = grid.err[0, xs]
    scale = grid.spec.a_x if grid.spec else 1.0
    details: dict[str, Any] = {"window": (int(lo), int(hi))}
    if np.any(np.abs(y) <= 2.0 * e) or np.any(y == 0):
        details["reason"] = "window dominated by noise"
        return CheckReport("clustering", INCONCLUSIVE, math.nan, 0.0, details)

    rate = _log_slope(xs, y, np.abs(y) / np.where(e > 0, e, 1.0) if np.any(e > 0) else None)
    if grid.bins is None:
        err = 0.0
        ok = rate > 0
    else:
        packed = grid.bins[:, 0, xs]
        if grid.connected:
            packed = np.concatenate([packed, grid.mean_bins[:, None]], axis=1)

        def est(v):
            yy = v[:-1] - v[-1] ** 2 if grid.connected else v
            if np.any(yy == 0):
                return np.nan
            return _log_slope(xs, yy, np.abs(y) / e)

        _, err = jackknife(packed, est)
        err = float(err)
        if not math.isfinite(err):
            details["reason"] = "jackknife sample crossed zero"
            return CheckReport("clustering", INCONCLUSIVE, rate, 0.0, details)
        ok = rate > 3.0 * err
    details.update(rate_lattice=rate, error_lattice=err, rate=rate / scale, error=err / scale)
    return CheckReport("clustering", PASS if ok else FAIL, rate / scale, 3.0 * err / scale, details)


def zero_mode_correlator(grid: CorrelatorGrid):
    """``G(x) = sum_tau S(tau, x)`` with jackknife errors (connected if the grid is)."""
    if grid.bins is None:
        return grid.s.sum(axis=0), np.zeros(grid.shape[1])
    n_t = grid.shape[0]
    packed = grid.bins.sum(axis=1)
    if grid.connected:
        packed = np.concatenate([packed, grid.mean_bins[:, None]], axis=1)
        return jackknife(packed, lambda v: v[:-1] - n_t * v[-1] ** 2)
    return jackknife(packed, lambda v: v)


def _cosh_rate(xs, g, sigma, n_x, guess):
    def model(x, amp, e):
        return amp * np.cosh(e * (x - n_x / 2.0))

    amp0 = g[0] / math.cosh(guess * (xs[0] - n_x / 2.0))
    popt, _ = optimize.curve_fit(model, xs, g, p0=(amp0, guess), sigma=sigma, maxfev=20000)
    return float(popt[1])


def spatial_decay_rate(grid: CorrelatorGrid, x_range: tuple[int, int]) -> tuple[float, float]:
    """Decay rate of the zero-Matsubara-mode correlator in physical units.

    Fits ``A cosh(E (x - L/2))`` over ``x_range`` (inclusive, lattice units);
    errors from refitting jackknife samples.
    """
    if grid.spec is None:
        raise ValueError("grid needs a lattice spec for physical units")
    n_x = grid.shape[1]
    xs = np.arange(x_range[0], x_range[1] + 1)
    g, ge = zero_mode_correlator(grid)
    sigma = np.where(ge[xs] > 0, ge[xs], 1.0)
    ratio = np.clip(g[xs[0]] / g[xs[0] + 1], 1.0 + 1e-12, None)
    guess = math.log(ratio)
    e = _cosh_rate(xs, g[xs], sigma, n_x, guess)
    if grid.bins is None:
        return e / grid.spec.a_x, 0.0
    n_t = grid.shape[0]
    packed = grid.bins.sum(axis=1)
    if grid.connected:
        packed = np.concatenate([packed, grid.mean_bins[:, None]], axis=1)

    def est(v):
        gg = v[:-1] - n_t * v[-1] ** 2 if grid.connected else v
        return _cosh_rate(xs, gg[xs], sigma, n_x, e)

    _, err = jackknife(packed, est)
    return e / grid.spec.a_x, float(err) / grid.spec.a_x


def _welch_dof(a: CorrelatorGrid, b: CorrelatorGrid) -> int | None:
    # conservative Welch degrees of freedom: the smaller bin count minus one
    counts = [g.bins.shape[0] for g in (a, b) if g.bins is not None]
    if not counts:
        counts = [g.n_bins for g in (a, b) if g.n_bins]
    return min(counts) - 1 if counts else None


def nelson_symmetry_check(run_a: CorrelatorGrid, run_b: CorrelatorGrid) -> CheckReport:
    """Compare ``S_a(dt, dx)`` on (n_t, n_x) with ``S_b(dx, dt)`` from the transposed lattice."""
    if run_a.shape != run_b.shape[::-1]:
        raise DimensionError(f"lattices {run_a.shape} and {run_b.shape} are not transposes")
    if run_a.spec is not None and run_b.spec is not None:
        sa, sb = run_a.spec, run_b.spec
        if not (math.isclose(sa.a_t, sb.a_x) and math.isclose(sa.a_x, sb.a_t)):
            raise DimensionError("lattice spacings are not exchanged between the two runs")
    diff = run_a.s - run_b.s.T
    err = np.hypot(run_a.err, run_b.err.T)
    z, n_tested = _standardized(diff, err, _exact_floor(run_a))
    thr = bonferroni_threshold(n_tested, dof=_welch_dof(run_a, run_b))
    worst = np.unravel_index(int(np.argmax(z)), z.shape)
    stat = float(np.max(z))
    details = {"max_abs_diff": float(np.max(np.abs(diff))), "n_tested": n_tested,
               "worst_dt": int(worst[0]), "worst_dx": int(worst[1])}
    return CheckReport("nelson_symmetry", PASS if stat < thr else FAIL, stat, thr, details)
