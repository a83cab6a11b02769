"""Periodic lattice on the cylinder and the exact Gaussian free field on it.

A field configuration is a plain ``float64`` array of shape ``(n_t, n_x)``,
row-major over (time index, space index).  Time is the thermal circle
(``n_t * a_t = beta``), space is compactified to a circle of length
``L = n_x * a_x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .spectral import ModelParams


@dataclass(frozen=True)
class LatticeSpec:
    n_t: int
    n_x: int
    a_t: float
    a_x: float

    def __post_init__(self):
        # extent 1 is allowed (gradient term vanishes); used for single-site checks
        if self.n_t < 1 or self.n_x < 1:
            raise ParameterError("lattice extents must be positive")
        if not (self.a_t > 0 and self.a_x > 0):
            raise ParameterError("lattice spacings must be positive")

    @classmethod
    def from_model(cls, params: ModelParams, n_t: int, n_x: int) -> "LatticeSpec":
        if not math.isfinite(params.circumference):
            raise ParameterError("lattice needs a finite spatial circumference")
        return cls(n_t, n_x, params.beta / n_t, params.circumference / n_x)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_t, self.n_x)

    @property
    def volume(self) -> int:
        return self.n_t * self.n_x

    @property
    def beta(self) -> float:
        return self.n_t * self.a_t

    @property
    def length(self) -> float:
        return self.n_x * self.a_x

    def transposed(self) -> "LatticeSpec":
        return LatticeSpec(self.n_x, self.n_t, self.a_x, self.a_t)

    def validate(self, params: ModelParams, rtol: float = 1e-12):
        """Check that this lattice discretizes the cylinder of ``params``."""
        if not math.isclose(self.beta, params.beta, rel_tol=rtol):
            raise ParameterError(f"n_t * a_t = {self.beta} != beta = {params.beta}")
        if not math.isclose(self.length, params.circumference, rel_tol=rtol):
            raise ParameterError(f"n_x * a_x = {self.length} != L = {params.circumference}")

    def check_config(self, cfg: np.ndarray) -> np.ndarray:
        cfg = np.asarray(cfg, dtype=float)
        if cfg.shape[-2:] != self.shape:
            raise DimensionError(f"configuration shape {cfg.shape} does not match lattice {self.shape}")
        return cfg


@dataclass(frozen=True)
class LatticeCovariance:
    spec: LatticeSpec
    mass: float
    eigenvalues: np.ndarray
    position_kernel: np.ndarray

    def __call__(self, dt: int, dx: int) -> float:
        return float(self.position_kernel[dt % self.spec.n_t, dx % self.spec.n_x])


def lattice_eigenvalues(spec: LatticeSpec, m: float) -> np.ndarray:
    """Spectrum of ``-Laplacian + m^2`` on the periodic lattice, shape ``(n_t, n_x)``."""
    if not m > 0:
        raise ParameterError("mass must be positive")
    p = np.arange(spec.n_t)
    q = np.arange(spec.n_x)
    lt = (4.0 / spec.a_t**2) * np.sin(np.pi * p / spec.n_t) ** 2
    lx = (4.0 / spec.a_x**2) * np.sin(np.pi * q / spec.n_x) ** 2
    return lt[:, None] + lx[None, :] + m * m


def exact_lattice_covariance(spec: LatticeSpec, m: float) -> LatticeCovariance:
    lam = lattice_eigenvalues(spec, m)
    kernel = np.fft.ifft2(1.0 / lam).real / (spec.a_t * spec.a_x)
    if spec.n_t == spec.n_x and spec.a_t == spec.a_x:
        # the exact kernel is symmetric here; remove FFT rounding asymmetry
        kernel = 0.5 * (kernel + kernel.T)
    return LatticeCovariance(spec, m, lam, kernel)


def wick_constant(spec: LatticeSpec, m: float) -> float:
    """Coincident-point lattice covariance ``C(0, 0)`` used for Wick ordering.

    Grows like ``log(1/a) / 2pi`` as the spacing is refined.
    """
    lam = lattice_eigenvalues(spec, m)
    return float(np.mean(1.0 / lam)) / (spec.a_t * spec.a_x)


def _filter_amplitude(spec: LatticeSpec, m: float) -> np.ndarray:
    lam = lattice_eigenvalues(spec, m)[:, : spec.n_x // 2 + 1]
    return 1.0 / np.sqrt(spec.a_t * spec.a_x * lam)


def gff_from_noise(noise: np.ndarray, spec: LatticeSpec, m: float) -> np.ndarray:
    """Map white noise to a free field: ``phi = A^{-1/2} xi``.

    ``A = a_t a_x (-Laplacian + m^2)`` is the precision matrix of the lattice
    Gaussian.  It is diagonal in Fourier space with a real, even spectrum, so
    filtering the noise there yields a real field with covariance exactly ``A^{-1}``.
    """
    noise = spec.check_config(noise)
    amp = _filter_amplitude(spec, m)
    return np.fft.irfft2(np.fft.rfft2(noise) * amp, s=spec.shape)


def sample_gff(spec: LatticeSpec, m: float, rng_seed=None, size: int | None = None) -> np.ndarray:
    """Exact draw(s) from the lattice Gaussian free field.

    ``rng_seed`` is an integer seed, a ``SeedSequence`` or a ``numpy.random.Generator``;
    the same seed always gives the same configuration.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    shape = spec.shape if size is None else (size, *spec.shape)
    return gff_from_noise(rng.standard_normal(shape), spec, m)
