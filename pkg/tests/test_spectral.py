import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from thermal_cylinder.errors import DomainError, IntegrationError, ParameterError, SingularityError
from thermal_cylinder.spectral import (ModelParams, Polynomial, bose_occupation, dispersion,
                                       free_euclidean_propagator, free_kms_expectation, free_wightman,
                                       matsubara_covariance, momentum_covariance,
                                       thermal_covariance_kernel, vacuum_wightman)
from oracles import coth_kernel_form, image_sum_propagator

pos = st.floats(0.05, 5.0)


def params(m=1.0, beta=1.0):
    return ModelParams(m, beta)


class TestPolynomial:
    def test_trailing_zeros_stripped(self):
        assert Polynomial((1.0, 0.0, 2.0, 0.0, 0.0)).coeffs == (1.0, 0.0, 2.0)

    def test_zero_polynomial_is_free(self):
        assert Polynomial().is_zero

    @pytest.mark.parametrize("coeffs", [(0.0, 1.0), (0.0, 0.0, 0.0, 1.0), (0.0, 0.0, -1.0)])
    def test_rejects_unbounded(self, coeffs):
        with pytest.raises(ParameterError):
            Polynomial(coeffs)

    def test_phi4(self):
        P = Polynomial.phi4(0.5)
        assert P.degree == 4 and P(2.0) == pytest.approx(8.0)


class TestModelParams:
    @pytest.mark.parametrize("kw", [dict(mass=0.0, beta=1.0), dict(mass=1.0, beta=-1.0),
                                    dict(mass=1.0, beta=1.0, circumference=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            ModelParams(**kw)


class TestDispersion:
    @pytest.mark.parametrize("k,m,expected", [(0, 1, 1), (3, 4, 5), (0.6, 0.8, 1.0)])
    def test_examples(self, k, m, expected):
        assert dispersion(k, m) == pytest.approx(expected, rel=1e-15)

    def test_nonpositive_mass(self):
        with pytest.raises(ParameterError):
            dispersion(1.0, 0.0)

    @given(st.floats(-50, 50), st.floats(-50, 50), pos)
    def test_bounded_below_and_monotone(self, k1, k2, m):
        assert dispersion(k1, m) >= m
        if abs(k1) <= abs(k2):
            assert dispersion(k1, m) <= dispersion(k2, m)


class TestBose:
    def test_ln2(self):
        assert bose_occupation(math.log(2.0), 1.0) == pytest.approx(1.0, rel=1e-14)

    def test_ln_three_halves(self):
        assert bose_occupation(math.log(1.5), 1.0) == pytest.approx(2.0, rel=1e-13)

    def test_asymptotic(self):
        exact = math.exp(-50.0) / -math.expm1(-50.0)
        assert bose_occupation(50.0, 1.0) == pytest.approx(exact, rel=1e-12)

    def test_overflow_is_zero(self):
        v = bose_occupation(1e4, 1.0)
        assert v == 0.0 and not math.isnan(v)

    @pytest.mark.parametrize("nu,beta", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
    def test_invalid(self, nu, beta):
        with pytest.raises(ParameterError):
            bose_occupation(nu, beta)

    @given(st.floats(1e-3, 30), st.floats(1e-3, 30))
    def test_decreasing(self, x, y):
        if x < y:
            assert bose_occupation(x, 1.0) >= bose_occupation(y, 1.0)


class TestThermalKernel:
    def test_zero_temperature(self):
        assert thermal_covariance_kernel(0.0, params(beta=1e4)) == pytest.approx(0.5, rel=1e-4)

    def test_reference_value(self):
        assert thermal_covariance_kernel(0.0, params()) == pytest.approx(0.5 / math.tanh(0.5), rel=1e-15)
        assert thermal_covariance_kernel(0.0, params()) == pytest.approx(1.0819767068693265, abs=1e-15)

    def test_bose_identity(self):
        rng = np.random.default_rng(3)
        p = params(1.3, 0.7)
        for k in rng.normal(0, 5, 100):
            nu = dispersion(k, p.mass)
            alt = (1 + 2 * bose_occupation(nu, p.beta)) / (2 * nu)
            assert abs(thermal_covariance_kernel(k, p) / alt - 1) < 1e-14

    @given(st.floats(-20, 20), pos, pos)
    def test_above_vacuum(self, k, m, beta):
        assert thermal_covariance_kernel(k, ModelParams(m, beta)) >= 1 / (2 * dispersion(k, m))

    def test_vectorized(self):
        ks = np.linspace(-3, 3, 7)
        out = thermal_covariance_kernel(ks, params())
        assert out.shape == ks.shape


class TestMatsubara:
    def test_zero_mode_only(self):
        assert matsubara_covariance(0.0, 0.0, params(), 0) == 1.0

    def test_reflection(self):
        rng = np.random.default_rng(0)
        p = params(1.0, 2.0)
        for tau in rng.uniform(0.01, 1.99, 10):
            a = matsubara_covariance(0.4, tau, p, 2000)
            b = matsubara_covariance(0.4, p.beta - tau, p, 2000)
            assert a == pytest.approx(b, rel=1e-12)

    def test_monotone_from_below(self):
        p = params()
        vals = [matsubara_covariance(0.0, 0.0, p, n) for n in (0, 1, 10, 100, 1000)]
        assert all(np.diff(vals) > 0)
        assert vals[-1] < thermal_covariance_kernel(0.0, p)

    def test_converges_to_closed_form_at_positive_tau(self):
        p = params(1.0, 2.0)
        assert matsubara_covariance(0.7, 0.5, p, 20000) == pytest.approx(momentum_covariance(0.7, 0.5, p), abs=1e-7)

    @pytest.mark.parametrize("tau", [-0.1, 1.0])
    def test_domain(self, tau):
        with pytest.raises(DomainError):
            matsubara_covariance(0.0, tau, params(), 10)


def test_momentum_covariance_at_zero_tau_is_kernel():
    p = params(0.8, 1.7)
    ks = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(momentum_covariance(ks, 0.0, p), thermal_covariance_kernel(ks, p), rtol=1e-14)


class TestPropagator:
    def test_reflection_symmetry(self):
        rng = np.random.default_rng(1)
        p = params(1.0, 2.0)
        for _ in range(20):
            tau, x = rng.uniform(0.05, 1.95), rng.uniform(-3, 3)
            a = free_euclidean_propagator(tau, x, p)
            b = free_euclidean_propagator(p.beta - tau, x, p)
            assert a == pytest.approx(b, rel=1e-12)
            assert a == pytest.approx(free_euclidean_propagator(tau, -x, p), rel=1e-12)

    def test_image_sum_midpoint(self):
        p = params(1.0, 2.0)
        assert abs(free_euclidean_propagator(1.0, 0.0, p) - image_sum_propagator(1.0, 0.0, 1.0, 2.0)) < 1e-10

    def test_vacuum_limit(self):
        p = params(1.0, 50.0)
        tau, x = 0.6, 0.8
        assert free_euclidean_propagator(tau, x, p) == pytest.approx(special.k0(1.0) / (2 * math.pi), rel=1e-8)

    @pytest.mark.parametrize("tau,x", [(1e-9, 0.5), (0.0, 0.3), (1.0, 1e-6)])
    def test_near_boundary(self, tau, x):
        p = params()
        assert free_euclidean_propagator(tau, x, p) == pytest.approx(image_sum_propagator(tau, x, 1.0, 1.0),
                                                                     rel=1e-9)

    def test_coincident_point(self):
        with pytest.raises(SingularityError):
            free_euclidean_propagator(0.0, 0.0, params())
        with pytest.raises(SingularityError):
            free_euclidean_propagator(1.0, 0.0, params())

    def test_domain(self):
        with pytest.raises(DomainError):
            free_euclidean_propagator(1.5, 0.1, params())

    @given(st.floats(0.02, 0.98), st.floats(-6, 6))
    def test_positive(self, tau, x):
        assert free_euclidean_propagator(tau, x, params()) > 0

    def test_spatial_decay_rate(self):
        p = params(1.0, 1.0)
        xs = np.linspace(5, 10, 11)
        vals = np.log([free_euclidean_propagator(0.5, x, p) for x in xs])
        rate = -np.polyfit(xs, vals, 1)[0]
        assert rate >= p.mass * (1 - 1e-3)


class TestWightman:
    @pytest.mark.parametrize("tau,x", [(0.3, 0.0), (0.5, 1.2), (0.9, 0.4)])
    def test_euclidean_bridge(self, tau, x):
        p = params()
        assert free_wightman(complex(0, -tau), x, p) == pytest.approx(free_euclidean_propagator(tau, x, p),
                                                                      rel=1e-10)

    def test_midline_real(self):
        p = params(1.0, 2.0)
        w = free_wightman(complex(0, -1.0), 0.7, p)
        assert abs(w.imag) < 1e-14 * abs(w.real)

    @pytest.mark.parametrize("t", [0.0, 0.4, 1.5])
    def test_kms_exchange(self, t):
        p = params()
        eps = 1e-3 * p.beta
        a = free_wightman(complex(t, -p.beta + eps), 0.5, p)
        b = free_wightman(complex(-t, -eps), 0.5, p)
        assert abs(a - b) < 10 * eps * abs(b)

    def test_kms_exchange_exact_inside_strip(self):
        p = params()
        eps = 0.2
        a = free_wightman(complex(0.3, -p.beta + eps), 0.5, p)
        b = free_wightman(complex(-0.3, -eps), 0.5, p)
        assert a == pytest.approx(b, rel=1e-10)

    def test_vacuum_piece(self):
        assert vacuum_wightman(-0.5j, 0.0, 1.0) == pytest.approx(special.k0(0.5) / (2 * math.pi))

    @pytest.mark.parametrize("t", [complex(0, -1.0), complex(0, -1.5), complex(0, 0.1)])
    def test_domain(self, t):
        with pytest.raises(DomainError):
            free_wightman(t, 0.0, params())

    def test_spacelike_real_time_is_real(self):
        w = free_wightman(0.2, 1.0, params())
        assert abs(w.imag) < 1e-6 * abs(w.real)


def gaussian(center, width, amp=1.0):
    return lambda k: amp * np.exp(-((k - center) ** 2) / (2 * width**2))


class TestKMSExpectation:
    def test_empty(self):
        assert free_kms_expectation(lambda k: 0.0 * k, params()) == 1.0

    def test_matches_covariance_form(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            m, beta = rng.uniform(0.5, 2), rng.uniform(0.3, 3)
            h = gaussian(rng.normal(), rng.uniform(0.3, 2), rng.uniform(0.2, 2))
            expected = math.exp(-coth_kernel_form(h, m, beta) / 2)
            assert free_kms_expectation(h, ModelParams(m, beta)) == pytest.approx(expected, rel=1e-10)

    def test_monotone_in_beta(self):
        h = gaussian(0.3, 1.0)
        vals = [free_kms_expectation(h, params(1.0, b)) for b in (0.2, 0.5, 1, 2, 5, 20)]
        assert all(np.diff(vals) >= 0)
        assert 0 < vals[0] <= vals[-1] <= 1

    def test_tabulated_input(self):
        h = gaussian(0.0, 1.0)
        k = np.linspace(-12, 12, 4001)
        a = free_kms_expectation((k, h(k)), params())
        b = free_kms_expectation(h, params())
        assert a == pytest.approx(b, rel=1e-9)

    def test_not_integrable(self):
        with pytest.raises(IntegrationError):
            free_kms_expectation(lambda k: np.abs(k) + 1.0, params())
