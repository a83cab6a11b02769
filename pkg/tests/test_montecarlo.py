import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from thermal_cylinder.correlators import binned_two_point, two_point_estimator
from thermal_cylinder.errors import ActionBlowupError, ParameterError
from thermal_cylinder.lattice import LatticeSpec, exact_lattice_covariance, wick_constant
from thermal_cylinder.montecarlo import (MCConfig, acceptance_probability, chain_seed, field_mean,
                                         local_action_change, metropolis_sweep, pooled_estimates, run_chain,
                                         run_chains)
from thermal_cylinder.spectral import ModelParams, Polynomial
from thermal_cylinder.wick import WickPolynomial, lattice_action, wick_order
from oracles import single_site_moment

FREE = WickPolynomial((0.0,), 1.0)


def model(spec, P=Polynomial()):
    return ModelParams(1.0, spec.beta, P, spec.length)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(step_width=-1.0), dict(meas_interval=0), dict(n_chains=0),
                                    dict(order="random"), dict(seed=-1), dict(seed=2**64)])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            MCConfig(**kw)


class TestLocalUpdate:
    @given(st.integers(0, 2**32 - 1), st.sampled_from([(4, 6), (1, 5), (5, 1), (2, 2), (1, 1)]))
    def test_local_matches_global(self, seed, shape):
        rng = np.random.default_rng(seed)
        spec = LatticeSpec(*shape, 0.4, 0.3)
        Q = wick_order(Polynomial((0.0, 0.0, 0.2, 0.0, 0.5)), 0.3)
        cfg = rng.normal(size=shape)
        i, j = rng.integers(shape[0]), rng.integers(shape[1])
        new = cfg.copy()
        new[i, j] += rng.normal()
        expected = lattice_action(new, spec, 1.3, Q) - lattice_action(cfg, spec, 1.3, Q)
        got = local_action_change(cfg, i, j, new[i, j], spec, 1.3, Q)
        assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_acceptance_probability(self):
        assert acceptance_probability(-1.0) == 1.0
        assert acceptance_probability(0.0) == 1.0
        assert acceptance_probability(2.0) == pytest.approx(math.exp(-2.0))

    def test_zero_width(self):
        spec = LatticeSpec(4, 4, 0.5, 0.5)
        cfg = np.random.default_rng(0).normal(size=spec.shape)
        out, acc = metropolis_sweep(cfg, spec, 1.0, FREE, np.random.default_rng(1), step_width=0.0)
        assert acc == 1.0 and np.array_equal(out, cfg)

    def test_sweep_does_not_mutate_input(self):
        spec = LatticeSpec(4, 4, 0.5, 0.5)
        cfg = np.zeros(spec.shape)
        out, acc = metropolis_sweep(cfg, spec, 1.0, FREE, np.random.default_rng(1))
        assert np.all(cfg == 0) and 0 < acc <= 1 and not np.array_equal(out, cfg)

    def test_blowup(self):
        spec = LatticeSpec(2, 2, 0.5, 0.5)
        Q = wick_order(Polynomial.phi4(1.0), 0.3)
        with pytest.raises(ActionBlowupError):
            metropolis_sweep(np.zeros(spec.shape), spec, 1.0, Q, np.random.default_rng(0), step_width=1e200)


def test_detailed_balance_discretized():
    """Two sites, five field values: the sweep's transition matrix leaves exp(-S) invariant."""
    spec = LatticeSpec(2, 1, 0.5, 0.7)
    Q = wick_order(Polynomial.phi4(0.5), 0.4)
    values = np.linspace(-1.5, 1.5, 5)
    states = list(itertools.product(range(5), repeat=2))
    index = {s: i for i, s in enumerate(states)}

    def config(s):
        return values[list(s)].reshape(2, 1)

    def site_matrix(site):
        T = np.zeros((25, 25))
        for s in states:
            cfg = config(s)
            for v in range(5):  # symmetric proposal: uniform over the five values
                t = list(s)
                t[site] = v
                ds = local_action_change(cfg, site, 0, values[v], spec, 1.0, Q)
                T[index[s], index[tuple(t)]] += acceptance_probability(ds) / 5
            T[index[s], index[s]] += 1 - T[index[s]].sum()
        return T

    T = site_matrix(0) @ site_matrix(1)
    w = np.array([math.exp(-lattice_action(config(s), spec, 1.0, Q)) for s in states])
    pi = w / w.sum()
    assert np.max(np.abs(pi @ T - pi)) < 1e-12
    np.testing.assert_allclose(T.sum(axis=1), 1.0, atol=1e-14)


class TestChains:
    def test_deterministic(self):
        spec = LatticeSpec(6, 6, 0.5, 0.5)
        mc = MCConfig(seed=9, n_therm=40, n_sweeps=200)
        a = run_chain(model(spec), spec, mc, FREE)
        b = run_chain(model(spec), spec, mc, FREE)
        assert np.array_equal(a.series["phi"], b.series["phi"])
        assert np.array_equal(a.acceptance, b.acceptance)

    def test_chain_seeds_independent_of_chain_count(self):
        spec = LatticeSpec(4, 4, 0.5, 0.5)
        one = run_chains(model(spec), spec, MCConfig(seed=3, n_therm=20, n_sweeps=100, n_chains=1), FREE)
        three = run_chains(model(spec), spec, MCConfig(seed=3, n_therm=20, n_sweeps=100, n_chains=3), FREE,
                           threads=2)
        assert np.array_equal(one[0].series["phi2"], three[0].series["phi2"])
        assert not np.array_equal(three[0].series["phi2"], three[1].series["phi2"])
        assert chain_seed(3, 1).entropy == 3

    def test_pooled_mean(self):
        spec = LatticeSpec(4, 4, 0.5, 0.5)
        chains = run_chains(model(spec), spec, MCConfig(seed=1, n_therm=50, n_sweeps=400, n_chains=3), FREE)
        pooled = pooled_estimates(chains)
        means = [c.estimates["phi2"].mean for c in chains]
        counts = [c.n_measurements for c in chains]
        assert pooled["phi2"].mean == pytest.approx(np.average(means, weights=counts))

    def test_keep_configs_stride(self):
        spec = LatticeSpec(4, 4, 0.5, 0.5)
        r = run_chain(model(spec), spec, MCConfig(seed=1, n_therm=10, n_sweeps=100), FREE,
                      observables={"phi": field_mean}, keep_configs=True, keep_stride=7)
        assert r.configs.shape == (15, 4, 4)
        assert r.configs[1].mean() == pytest.approx(r.series["phi"][7])

    def test_acceptance_warning(self):
        spec = LatticeSpec(4, 4, 0.5, 0.5)
        r = run_chain(model(spec), spec, MCConfig(n_therm=10, n_sweeps=100, step_width=50.0, tune=False), FREE)
        assert r.warnings and "acceptance" in r.warnings[0]

    def test_tuning_targets_half(self):
        spec = LatticeSpec(8, 8, 0.5, 0.5)
        r = run_chain(model(spec), spec, MCConfig(n_therm=400, n_sweeps=400, step_width=0.01), FREE)
        assert r.acceptance[400:].mean() == pytest.approx(0.5, abs=0.1)
        assert not r.warnings


def test_free_correlator_matches_exact():
    spec = LatticeSpec(16, 16, 0.5, 0.5)
    exact = exact_lattice_covariance(spec, 1.0)
    r = run_chain(model(spec), spec, MCConfig(seed=4, n_therm=200, n_sweeps=20_000, meas_interval=2), FREE,
                  observables={"S": two_point_estimator, "phi": field_mean})
    g = binned_two_point(r.series["S"], r.series["phi"], spec)
    for dt, dx in [(0, 0), (1, 0), (0, 1), (2, 2)]:
        assert abs(g.s[dt, dx] - exact(dt, dx)) < 3 * g.err[dt, dx]


def test_single_site_phi4():
    spec = LatticeSpec(1, 1, 1.0, 1.0)
    P = Polynomial.phi4(0.5)
    Q = wick_order(P, wick_constant(spec, 1.0))
    r = run_chain(model(spec, P), spec, MCConfig(seed=2, n_therm=1000, n_sweeps=200_000), Q)
    est = r.estimates["phi2"]
    expected = single_site_moment(1.0, 1.0, Q.coeffs)
    assert abs(est.mean - expected) < 3 * est.std_error


@pytest.fixture(scope="module")
def phi4_chain():
    spec = LatticeSpec(8, 8, 0.5, 0.5)
    P = Polynomial.phi4(0.5)
    Q = wick_order(P, wick_constant(spec, 1.0))
    return spec, P, Q, run_chain(model(spec, P), spec, MCConfig(seed=5, n_therm=500, n_sweeps=40_000), Q)


def test_z2_mean(phi4_chain):
    est = phi4_chain[3].estimates["phi"]
    assert abs(est.mean) < 3 * est.std_error


def test_z2_distribution(phi4_chain):
    r = phi4_chain[3]
    x = r.series["phi"]
    step = math.ceil(2 * r.estimates["phi"].tau_int)
    thin = x[::step]
    assert stats.ks_2samp(thin, -thin).pvalue > 0.01


def test_n_eff_consistent(phi4_chain):
    est = phi4_chain[3].estimates["phi2"]
    n = phi4_chain[3].n_measurements
    assert 0.5 <= est.n_eff / (n / (2 * est.tau_int)) <= 2


def test_checkerboard_agrees(phi4_chain):
    spec, P, Q, lex = phi4_chain
    cb = run_chain(model(spec, P), spec, MCConfig(seed=6, n_therm=500, n_sweeps=40_000, order="checkerboard"), Q)
    a, b = lex.estimates["phi2"], cb.estimates["phi2"]
    assert abs(a.mean - b.mean) < 3 * math.hypot(a.std_error, b.std_error)
