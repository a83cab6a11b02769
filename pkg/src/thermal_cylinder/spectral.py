"""Closed-form kernels of the free thermal scalar field in 1+1 dimensions.

Units: energies and inverse lengths share one scale (c = hbar = 1).  The
Euclidean time direction is the thermal circle of circumference ``beta``;
all continuum kernels here are on the infinite spatial line.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

from .errors import DomainError, IntegrationError, ParameterError, SingularityError

# e^{-37} ~ 8.5e-17: tail dropped beyond this envelope factor
_TAIL_EXPONENT = 37.0
_GL_ORDER = 32
_MAX_PANELS = 200_000
_GL_NODES, _GL_WEIGHTS = leggauss(_GL_ORDER)


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial ``sum_j coeffs[j] * phi**j``.

    The zero polynomial is accepted and stands for the free theory.
    Otherwise the degree must be even and the leading coefficient positive,
    so the potential is bounded below.
    """

    coeffs: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        c = tuple(float(a) for a in self.coeffs) or (0.0,)
        if not all(math.isfinite(a) for a in c):
            raise ParameterError(f"non-finite polynomial coefficient in {c}")
        # strip trailing zeros so degree is well defined
        while len(c) > 1 and c[-1] == 0.0:
            c = c[:-1]
        object.__setattr__(self, "coeffs", c)
        if self.is_zero:
            return
        if self.degree % 2 != 0 or self.degree < 2:
            raise ParameterError(f"polynomial degree must be even and >= 2, got {self.degree}")
        if c[-1] <= 0:
            raise ParameterError("leading coefficient must be positive")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0.0

    @property
    def is_even(self) -> bool:
        return all(a == 0.0 for a in self.coeffs[1::2])

    def __call__(self, phi):
        return np.polynomial.polynomial.polyval(phi, self.coeffs)

    @classmethod
    def phi4(cls, coupling: float, mass_term: float = 0.0) -> "Polynomial":
        """``coupling * phi**4 + mass_term * phi**2``."""
        return cls((0.0, 0.0, mass_term, 0.0, coupling))


@dataclass(frozen=True)
class ModelParams:
    mass: float
    beta: float
    poly: Polynomial = field(default_factory=Polynomial)
    circumference: float = math.inf

    def __post_init__(self):
        if not isinstance(self.poly, Polynomial):
            object.__setattr__(self, "poly", Polynomial(tuple(self.poly)))
        for name in ("mass", "beta", "circumference"):
            v = getattr(self, name)
            if not v > 0 or math.isnan(v):
                raise ParameterError(f"{name} must be positive, got {v}")


def dispersion(k, m: float):
    """Relativistic one-particle energy ``sqrt(k^2 + m^2)``."""
    if not m > 0:
        raise ParameterError(f"mass must be positive, got {m}")
    return np.hypot(k, m)


def bose_occupation(nu, beta: float):
    """Bose-Einstein occupation ``1/(exp(beta*nu) - 1)``.

    Written with ``expm1`` so that small ``beta*nu`` keeps full precision and
    very large ``beta*nu`` underflows cleanly to 0.
    """
    x = np.asarray(beta * np.asarray(nu, dtype=float))
    if np.any(~(x > 0)):
        raise ParameterError("beta * nu must be positive")
    with np.errstate(over="ignore"):
        out = 1.0 / np.expm1(x)
    return out if out.ndim else float(out)


def thermal_covariance_kernel(k, params: ModelParams):
    """Momentum-space kernel of the equal-time thermal covariance.

    ``(1 + e^{-b nu}) / (2 nu (1 - e^{-b nu})) = coth(b nu / 2) / (2 nu)``.
    """
    nu = dispersion(k, params.mass)
    x = params.beta * nu
    # coth(x/2) = 1 + 2/(e^x - 1), stable at both ends
    with np.errstate(over="ignore"):
        val = (1.0 + 2.0 / np.expm1(x)) / (2.0 * nu)
    return val if np.ndim(val) else float(val)


def momentum_covariance(k, tau: float, params: ModelParams):
    """Closed form ``cosh(nu (beta/2 - tau)) / (2 nu sinh(beta nu / 2))`` for ``0 <= tau < beta``."""
    beta = params.beta
    if not 0.0 <= tau < beta:
        raise DomainError(f"tau must lie in [0, beta), got {tau}")
    nu = dispersion(k, params.mass)
    val = (np.exp(-nu * tau) + np.exp(-nu * (beta - tau))) / (-2.0 * nu * np.expm1(-beta * nu))
    return val if np.ndim(val) else float(val)


def matsubara_covariance(k: float, tau: float, params: ModelParams, n_cut: int) -> float:
    """Truncated Matsubara sum ``(1/beta) sum_{|n|<=n_cut} e^{i w_n tau}/(w_n^2 + nu^2)``."""
    beta = params.beta
    if not 0.0 <= tau < beta:
        raise DomainError(f"tau must lie in [0, beta), got {tau}")
    if n_cut < 0:
        raise ParameterError("n_cut must be non-negative")
    nu2 = k * k + params.mass**2
    total = 1.0 / nu2
    if n_cut:
        n = np.arange(n_cut, 0, -1, dtype=float)  # smallest terms first
        w = 2.0 * math.pi * n / beta
        total += 2.0 * math.fsum(np.cos(w * tau) / (w * w + nu2))
    return total / beta


def _breakpoints(k_max: float, mass: float, decay: float, freq: float) -> np.ndarray:
    # Panel width: resolve the mass scale near k=0, grow geometrically after,
    # never exceed half an oscillation period or 4 e-folds of the envelope.
    osc = math.pi / freq if freq > 0 else math.inf
    edges = [0.0]
    k = 0.0
    while k < k_max:
        h = min(osc, max(0.5 * mass, 0.25 * k), 4.0 / decay)
        k = min(k + h, k_max)
        edges.append(k)
        if len(edges) > _MAX_PANELS:
            raise IntegrationError("too many quadrature panels")
    return np.asarray(edges)


def _panel_gauss_legendre(f: Callable, edges: np.ndarray):
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = f(nodes)
    return np.sum(vals * _GL_WEIGHTS[None, :] * half[:, None])


def _adaptive_gl(f: Callable, k_max: float, mass: float, decay: float, freq: float,
                 rtol: float = 1e-13):
    """Composite Gauss-Legendre on [0, k_max]; panels halved until stable."""
    edges = _breakpoints(k_max, mass, decay, freq)
    prev = _panel_gauss_legendre(f, edges)
    for _ in range(4):
        mids = 0.5 * (edges[1:] + edges[:-1])
        edges = np.sort(np.concatenate([edges, mids]))
        cur = _panel_gauss_legendre(f, edges)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    if abs(cur - prev) <= 1e-10 * max(abs(cur), 1e-300):
        return cur
    raise IntegrationError(f"Gauss-Legendre did not converge: {prev} vs {cur}")


def _check_tau(tau: float, beta: float):
    if not 0.0 <= tau <= beta:
        raise DomainError(f"tau must lie in [0, beta], got {tau}")


def free_euclidean_propagator(tau: float, x: float, params: ModelParams) -> float:
    """Continuum free Schwinger function on the cylinder (thermal circle x line).

    ``S(tau, x) = int dk/2pi e^{ikx} (e^{-tau nu} + e^{-(beta-tau) nu}) / (2 nu (1 - e^{-beta nu}))``
    """
    beta, m = params.beta, params.mass
    _check_tau(tau, beta)
    x = abs(float(x))
    decay = min(tau, beta - tau)
    if decay == 0.0 and x == 0.0:
        raise SingularityError("free propagator diverges at coincident points")

    def integrand(k):
        nu = np.hypot(k, m)
        num = np.exp(-tau * nu) + np.exp(-(beta - tau) * nu)
        return np.cos(k * x) * num / (2.0 * nu * -np.expm1(-beta * nu))

    if decay > 0.0:
        k_max = _TAIL_EXPONENT / decay
        n_est = k_max * x / math.pi if x else 0.0
        if n_est < _MAX_PANELS / 4:
            return float(_adaptive_gl(integrand, k_max, m, decay, x)) / math.pi
    return _near_boundary_propagator(decay, x, params)


def _near_boundary_propagator(tau_s: float, x: float, params: ModelParams) -> float:
    """Propagator for tau close to 0 (mod beta) and x != 0.

    The slowly decaying piece ``e^{-tau nu}/2nu`` is split as
    ``e^{-tau (k+m)}/2(k+m)`` (Fourier transform via the complex exponential
    integral) plus a remainder falling off like ``1/k^2`` (QAWF).
    """
    beta, m = params.beta, params.mass
    tau_l = beta - tau_s

    def fast(k):
        nu = np.hypot(k, m)
        occ = 1.0 / np.expm1(beta * nu)
        return np.cos(k * x) * (np.exp(-tau_s * nu) * occ + np.exp(-tau_l * nu) * (1.0 + occ)) / (2.0 * nu)

    fast_part = _adaptive_gl(fast, _TAIL_EXPONENT / tau_l, m, tau_l, x)

    def remainder(k):
        nu = math.hypot(k, m)
        gap = m - m * m / (k + nu)  # k + m - nu without cancellation
        e = math.exp(-tau_s * nu)
        return 0.5 * e * (gap / (nu * (k + m)) - math.expm1(-tau_s * gap) / (k + m))

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            rem, _ = integrate.quad(remainder, 0.0, np.inf, weight="cos", wvar=x,
                                    epsabs=1e-13, limlst=200)
        except integrate.IntegrationWarning as exc:
            raise IntegrationError(str(exc)) from exc
    # int_0^inf cos(kx) e^{-tau(k+m)}/(k+m) dk = Re[e^{-imx} E1(m (tau - i x))]
    lead = 0.5 * (np.exp(-1j * m * x) * special.exp1(m * complex(tau_s, -x))).real
    return (float(fast_part) + rem + lead) / math.pi


def _thermal_wightman_part(t: complex, x: float, params: ModelParams) -> complex:
    # (1/pi) int_0^inf cos(kx) rho(nu) cos(nu t)/nu dk
    beta, m = params.beta, params.mass
    decay = beta - abs(t.imag)
    freq = abs(x) + abs(t.real)

    def integrand(k):
        nu = np.hypot(k, m)
        # rho cos(nu t) with the e^{-beta nu} factor folded into the exponents
        both = np.exp(nu * (-1j * t - beta)) + np.exp(nu * (1j * t - beta))
        return np.cos(k * x) * both / (-2.0 * np.expm1(-beta * nu) * nu)

    k_max = _TAIL_EXPONENT / decay
    return complex(_adaptive_gl(integrand, k_max, m, decay, freq)) / math.pi


def vacuum_wightman(t: complex, x: float, mass: float) -> complex:
    """Zero-temperature two-point function ``K0(m sqrt(x^2 - t^2)) / 2pi`` for Im t < 0."""
    z = np.sqrt(complex(x * x) - complex(t) ** 2)
    return complex(special.kv(0, mass * z)) / (2.0 * math.pi)


def free_wightman(t: complex, x: float, params: ModelParams) -> complex:
    """Free thermal Wightman function in the strip ``-beta < Im t <= 0``.

    Real ``t`` is evaluated as the boundary value at ``Im t = -1e-6 beta``.
    The momentum integrand ``[(1+rho) e^{-i nu t} + rho e^{i nu t}] / 2nu`` is split
    into its vacuum piece ``e^{-i nu t}/2nu``, which has the closed Bessel form,
    and the thermal remainder ``rho cos(nu t)/nu``, integrated numerically.
    """
    t = complex(t)
    beta = params.beta
    if not -beta < t.imag <= 0.0:
        raise DomainError(f"Im t must lie in (-beta, 0], got {t.imag}")
    if t.imag == 0.0:
        t = complex(t.real, -1e-6 * beta)
    x = float(x)
    return vacuum_wightman(t, x, params.mass) + _thermal_wightman_part(t, x, params)


def _as_callable(h_hat) -> tuple[Callable | None, tuple[np.ndarray, np.ndarray] | None]:
    if callable(h_hat):
        return h_hat, None
    k, v = (np.asarray(a, dtype=float) for a in h_hat)
    if k.shape != v.shape or k.ndim != 1 or k.size < 3:
        raise ParameterError("tabulated h_hat must be two equal-length 1-D arrays")
    return None, (k, v)


def weyl_form(h_hat, params: ModelParams, weight: Callable) -> float:
    """``int dk/2pi |h_hat(k)|^2 weight(k)`` over the real line."""
    fn, table = _as_callable(h_hat)
    if table is not None:
        k, v = table
        val = integrate.simpson(np.abs(v) ** 2 * weight(k), x=k) / (2.0 * math.pi)
    else:
        def integrand(k):
            return abs(fn(k)) ** 2 * weight(k)

        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=0.0,
                                        epsrel=1e-13, limit=500)
            except (integrate.IntegrationWarning, OverflowError, ZeroDivisionError) as exc:
                raise IntegrationError(f"h_hat not integrable against kernel: {exc}") from exc
        val /= 2.0 * math.pi
    if not math.isfinite(val):
        raise IntegrationError("h_hat not integrable against kernel")
    return float(val)


def free_kms_expectation(h_hat, params: ModelParams) -> float:
    """Thermal expectation of the Weyl operator ``W(h)`` in the free KMS state.

    ``exp(-1/4 (h, (1 + 2 rho) h))`` with ``(h, g) = int dk/2pi conj(h) g / nu``,
    the one-particle inner product normalized so that ``W(h) = exp(i phi(h))``.
    ``h_hat`` is a vectorized callable or a tabulated pair ``(k, values)``.
    """
    m, beta = params.mass, params.beta

    def weight(k):
        nu = np.hypot(k, m)
        with np.errstate(over="ignore"):
            return (1.0 + 2.0 / np.expm1(beta * nu)) / nu

    return math.exp(-0.25 * weyl_form(h_hat, params, weight))
