import numpy as np
import pytest

from transmon_qudit.decay import (
    MEASURED_LIFETIMES_US,
    PopulationTrace,
    RateMatrix,
    basis_state,
    evolve,
    fit_rates,
    propagators,
    scaling_check,
    synthesize_traces,
)

TIMES = np.linspace(0.0, 300.0, 301)


def rk4(rates: RateMatrix, p0, t_end, dt=1e-3):
    """Independent oracle: fixed-step RK4 on dp/dt = G^T p."""
    a = rates.full.T
    p = np.array(p0, dtype=float)
    n = int(round(t_end / dt))
    for _ in range(n):
        k1 = a @ p
        k2 = a @ (p + 0.5 * dt * k1)
        k3 = a @ (p + 0.5 * dt * k2)
        k4 = a @ (p + dt * k3)
        p = p + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return p


@pytest.fixture(scope="module")
def measured_rates():
    return RateMatrix.from_lifetimes(5, MEASURED_LIFETIMES_US)


def test_rate_matrix_validation():
    with pytest.raises(ValueError):
        RateMatrix(np.array([[0.0, 0.1], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        RateMatrix(np.array([[0.0, 0.0], [-0.1, 0.0]]))
    r = RateMatrix.from_rates(3, {(1, 0): 0.2, (2, 1): 0.3, (2, 0): 0.05})
    np.testing.assert_allclose(r.generator.sum(axis=0), 0.0, atol=1e-15)
    assert r.full[2, 2] == pytest.approx(-0.35)


def test_two_level_closed_form():
    r = RateMatrix.from_lifetimes(2, {(1, 0): 84.0})
    tr = evolve(r, [0.0, 1.0], TIMES)
    np.testing.assert_allclose(tr.populations[:, 1], np.exp(-TIMES / 84.0), atol=1e-14)
    np.testing.assert_allclose(tr.populations[:, 0], 1 - np.exp(-TIMES / 84.0), atol=1e-14)


def test_ground_state_is_absorbing(measured_rates):
    tr = evolve(measured_rates, basis_state(5, 0), TIMES)
    np.testing.assert_array_equal(tr.populations, np.tile(basis_state(5, 0), (TIMES.size, 1)))


def test_matches_rk4(measured_rates):
    tr = evolve(measured_rates, basis_state(5, 4), [10.0, 50.0, 100.0])
    p, t_prev = basis_state(5, 4), 0.0
    for k, t in enumerate([10.0, 50.0, 100.0]):
        p = rk4(measured_rates, p, t - t_prev)
        t_prev = t
        np.testing.assert_allclose(tr.populations[k], p, atol=1e-6)
    assert abs(tr.populations.sum(axis=1) - 1).max() < 1e-9


def test_degenerate_outflow_uses_fallback():
    # Levels 1 and 2 have identical total outflow.
    r = RateMatrix.from_rates(3, {(1, 0): 0.05, (2, 1): 0.03, (2, 0): 0.02})
    tr = evolve(r, basis_state(3, 2), [5.0])
    assert np.all(np.isfinite(tr.populations))
    np.testing.assert_allclose(tr.populations[0], rk4(r, basis_state(3, 2), 5.0), atol=1e-8)


def test_propagator_composition(measured_rates):
    u = propagators(measured_rates, [7.0, 13.0, 20.0])
    np.testing.assert_allclose(u[1] @ u[0], u[2], atol=1e-9)


def test_synthetic_trace_bounds(measured_rates):
    clean = synthesize_traces(measured_rates, TIMES, [3])[0]
    assert clean.populations.min() >= 0 and clean.populations.max() <= 1
    noisy = synthesize_traces(measured_rates, TIMES, [3], 0.01, seed=1)[0]
    assert noisy.metadata == {"initial_state": 3, "noise_sigma": 0.01, "seed": 1}
    again = synthesize_traces(measured_rates, TIMES, [3], 0.01, seed=1)[0]
    np.testing.assert_array_equal(noisy.populations, again.populations)
    with pytest.raises(ValueError):
        PopulationTrace(TIMES[:2], [[0.5, 0.6], [1.2, 0.0]], provenance="synthetic")


def test_two_level_fit_with_noise():
    r = RateMatrix.from_lifetimes(2, {(1, 0): 84.0})
    traces = synthesize_traces(r, TIMES, [1], 0.01, seed=3)
    fit = fit_rates(traces)
    assert fit.rates.rate(1, 0) == pytest.approx(1 / 84.0, rel=0.02)
    assert fit.flags == []


def test_noiseless_fit_exact(measured_rates):
    traces = synthesize_traces(measured_rates, TIMES, range(1, 5))
    fit = fit_rates(traces)
    for i, j in measured_rates.channels():
        assert fit.rates.rate(i, j) == pytest.approx(measured_rates.rate(i, j), rel=1e-6)


def test_noisy_cascade_fit(measured_rates):
    traces = synthesize_traces(measured_rates, TIMES, range(1, 5), 0.01, seed=7)
    fit = fit_rates(traces)
    for i in range(1, 5):
        assert fit.rates.rate(i, i - 1) == pytest.approx(measured_rates.rate(i, i - 1), rel=0.02)
    for (i, j), tau in MEASURED_LIFETIMES_US.items():
        if i - j > 1 and (i, j) not in fit.unconstrained:
            assert fit.rates.rate(i, j) == pytest.approx(1 / tau, rel=0.5)
    rep = fit.report()
    assert set(rep) >= {"rates_per_us", "inverse_rates_us", "flags"}


def test_unidentifiable_rate_flagged(measured_rates):
    no_g30 = measured_rates.with_rates({(3, 0): 0.0})
    traces = synthesize_traces(no_g30, TIMES, range(1, 4), 0.01, seed=5)
    fit = fit_rates(traces)
    assert (3, 0) in fit.unconstrained
    assert "unconstrained:g30" in fit.flags


def test_full_model_captures_early_ground_rise(measured_rates):
    traces = synthesize_traces(measured_rates, TIMES, range(1, 4), 0.01, seed=7)
    early = TIMES < 70

    def p0_residual(fit):
        tr3 = traces[2]
        model = evolve(fit.rates, basis_state(fit.rates.n_levels, 3), TIMES).populations
        return np.linalg.norm((model[:, 0] - tr3.populations[:, 0])[early])

    full = fit_rates(traces, model="full")
    seq = fit_rates(traces, model="sequential")
    assert p0_residual(full) < p0_residual(seq)


def test_scaling_check(measured_rates):
    rep = scaling_check(measured_rates)
    np.testing.assert_allclose(rep.ratios, [1.0, 84 / 41 / 2, 84 / 30 / 3, 84 / 22 / 4])
    np.testing.assert_allclose(rep.ratios, [1.00, 1.02, 0.93, 0.95], atol=0.01)
    oscillator = RateMatrix.from_rates(5, {(i, i - 1): 0.01 * i for i in range(1, 5)})
    np.testing.assert_allclose(scaling_check(oscillator).ratios, 1.0)
    assert scaling_check(oscillator).slope == pytest.approx(0.01)
