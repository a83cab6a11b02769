"""Wick-ordered interaction and the lattice action.

The Euclidean action on the periodic lattice is

    S[phi] = sum_sites a_t a_x [ 1/2 (d_t phi)^2 + 1/2 (d_x phi)^2 + 1/2 m^2 phi^2 + Q(phi) ]

with forward differences and ``Q = :P:_c`` the polynomial Wick-ordered with
respect to the coincident-point lattice covariance ``c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .lattice import LatticeSpec
from .spectral import Polynomial


@dataclass(frozen=True)
class WickPolynomial:
    """Ordinary-polynomial coefficients of ``:P(phi):_c``."""

    coeffs: tuple[float, ...]
    wick_c: float

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, phi):
        return np.polynomial.polynomial.polyval(phi, self.coeffs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)


def wick_monomial(n: int, c: float) -> np.ndarray:
    """Coefficients of ``:phi^n:_c = sum_j n!/(j!(n-2j)!) (-c/2)^j phi^(n-2j)``."""
    out = np.zeros(n + 1)
    for j in range(n // 2 + 1):
        out[n - 2 * j] = math.factorial(n) / (math.factorial(j) * math.factorial(n - 2 * j)) * (-c / 2.0) ** j
    return out


def wick_order(P: Polynomial, c: float) -> WickPolynomial:
    if not c > 0:
        raise ParameterError(f"Wick constant must be positive, got {c}")
    coeffs = np.zeros(len(P.coeffs))
    for n, a in enumerate(P.coeffs):
        if a:
            coeffs[: n + 1] += a * wick_monomial(n, c)
    return WickPolynomial(tuple(float(v) for v in coeffs), float(c))


def action_density(cfg: np.ndarray, spec: LatticeSpec, m: float, Q: WickPolynomial) -> np.ndarray:
    cfg = spec.check_config(cfg)
    if cfg.ndim != 2:
        raise ParameterError("action_density takes a single configuration")
    dt = (np.roll(cfg, -1, axis=0) - cfg) / spec.a_t
    dx = (np.roll(cfg, -1, axis=1) - cfg) / spec.a_x
    kinetic = 0.5 * dt * dt + 0.5 * dx * dx
    return spec.a_t * spec.a_x * (kinetic + 0.5 * m * m * cfg * cfg + Q(cfg))


def lattice_action(cfg: np.ndarray, spec: LatticeSpec, m: float, Q: WickPolynomial) -> float:
    # fsum is exactly rounded, so the result does not depend on site order
    return math.fsum(action_density(cfg, spec, m, Q).ravel())


def nelson_transpose_action(cfg: np.ndarray, spec: LatticeSpec, m: float, Q: WickPolynomial) -> float:
    """Action of the axis-exchanged configuration on the lattice with exchanged extents.

    The spacings keep their roles (``a_t`` along the new first axis), so the
    result equals ``lattice_action`` exactly when ``a_t == a_x`` and differs otherwise.
    """
    cfg = spec.check_config(cfg)
    swapped = LatticeSpec(spec.n_x, spec.n_t, spec.a_t, spec.a_x)
    return lattice_action(np.ascontiguousarray(cfg.T), swapped, m, Q)
