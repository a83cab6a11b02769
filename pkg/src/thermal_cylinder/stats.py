"""Error analysis for correlated Monte Carlo series."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientDataError, InsufficientVarianceError

MIN_SERIES_LENGTH = 100


def autocorrelation_function(series: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation rho(t), t = 0..n-1, via zero-padded FFT."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    n = x.size
    f = np.fft.rfft(x, n=2 * n)
    acov = np.fft.irfft(f * np.conj(f), n=2 * n)[:n]
    if acov[0] <= 0.0:
        raise InsufficientVarianceError("series has zero variance")
    return acov / acov[0]


def autocorrelation(series, window_factor: float = 6.0) -> float:
    """Integrated autocorrelation time with Madras-Sokal automatic windowing.

    ``tau_int(W) = 1/2 + sum_{t=1}^{W} rho(t)``; the window is the smallest
    ``W >= window_factor * tau_int(W)``.  Returned in units of the series spacing.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < MIN_SERIES_LENGTH:
        raise InsufficientDataError(f"need a 1-D series of length >= {MIN_SERIES_LENGTH}")
    if np.ptp(x) == 0.0:
        raise InsufficientVarianceError("constant series")
    rho = autocorrelation_function(x)
    tau = 0.5 + np.cumsum(rho[1:])
    w = np.arange(1, x.size)
    ok = np.nonzero(w >= window_factor * tau)[0]
    tau_w = tau[ok[0]] if ok.size else tau[-1]
    return float(max(tau_w, 0.5))


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    std_error: float
    tau_int: float  # in sweeps
    n_eff: float

    @classmethod
    def from_series(cls, series, meas_interval: int = 1) -> "EstimatorResult":
        x = np.asarray(series, dtype=float)
        try:
            tau = autocorrelation(x)
        except InsufficientVarianceError:
            return cls(float(x.mean()), 0.0, 0.5 * meas_interval, float(x.size))
        n_eff = x.size / (2.0 * tau)
        err = float(np.std(x, ddof=1) / math.sqrt(n_eff))
        return cls(float(x.mean()), err, tau * meas_interval, n_eff)


def merge_estimates(results: Sequence[EstimatorResult], counts: Sequence[int]) -> EstimatorResult:
    """Pool independent chains: count-weighted mean, errors added in quadrature."""
    counts = np.asarray(counts, dtype=float)
    w = counts / counts.sum()
    mean = float(sum(wi * r.mean for wi, r in zip(w, results)))
    err = math.sqrt(sum((wi * r.std_error) ** 2 for wi, r in zip(w, results)))
    tau = float(sum(wi * r.tau_int for wi, r in zip(w, results)))
    return EstimatorResult(mean, err, tau, float(sum(r.n_eff for r in results)))


def bin_series(series: np.ndarray, bin_size: int) -> np.ndarray:
    """Block means over the leading axis; a trailing incomplete block is dropped."""
    x = np.asarray(series, dtype=float)
    n_bins = x.shape[0] // bin_size
    if n_bins < 2:
        raise InsufficientDataError("fewer than two bins")
    return x[: n_bins * bin_size].reshape(n_bins, bin_size, *x.shape[1:]).mean(axis=1)


def binned_error(series, bin_size: int) -> float:
    b = bin_series(series, bin_size)
    return float(np.std(b, ddof=1) / math.sqrt(b.shape[0]))


def jackknife(bins: np.ndarray, estimator: Callable[[np.ndarray], np.ndarray]):
    """Jackknife mean estimate and error of ``estimator(mean over bins)``.

    Returns ``(value, error)``; ``estimator`` maps an array shaped like one bin
    to a scalar or array.
    """
    bins = np.asarray(bins, dtype=float)
    n = bins.shape[0]
    if n < 2:
        raise InsufficientDataError("jackknife needs at least two bins")
    total = bins.sum(axis=0)
    value = np.asarray(estimator(total / n))
    samples = np.stack([np.asarray(estimator((total - bins[i]) / (n - 1))) for i in range(n)])
    err = np.sqrt((n - 1) / n * np.sum((samples - samples.mean(axis=0)) ** 2, axis=0))
    return value, err
