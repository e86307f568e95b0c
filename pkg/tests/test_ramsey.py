import math

import numpy as np
import pytest

from transmon_qudit.errors import MultiFrequencyError, NoPeaksError
from transmon_qudit.ramsey import (
    RamseyFit,
    RamseyTrace,
    analyze_ramsey,
    compare_dispersion,
    fit_ramsey,
    fringe_model,
    psd,
    remove_background,
    synthesize,
)

TIMES = np.linspace(0.0, 100.0, 2001)
STATE1 = RamseyFit(t2=72.0, f_a=0.379, delta_f=0.0)
STATE2 = RamseyFit(t2=32.0, f_a=0.504, delta_f=0.093)
STATE3 = RamseyFit(t2=12.0, f_a=1.1, delta_f=2.5)


def decay_background(t):
    return 0.5 * np.exp(-t / 84.0)


def test_trace_validation():
    with pytest.raises(ValueError):
        RamseyTrace([0.0, 1.0, 3.0, 4.0], np.zeros(4))
    with pytest.raises(ValueError):
        RamseyTrace(TIMES, np.full(TIMES.size, np.nan))
    assert RamseyTrace(TIMES, np.zeros(TIMES.size)).spacing == pytest.approx(0.05)


def test_fit_validation():
    with pytest.raises(ValueError):
        RamseyFit(t2=0.0, f_a=0.3, delta_f=0.0)
    with pytest.raises(ValueError):
        RamseyFit(t2=10.0, f_a=0.3, delta_f=-0.1)


def test_undamped_degenerate_model_is_two_cosine():
    tr = synthesize(RamseyFit(math.inf, 0.379, 0.0), TIMES)
    np.testing.assert_allclose(tr.amplitude, 2 * np.cos(2 * np.pi * 0.379 * TIMES), atol=1e-12)


def test_beat_period():
    t = np.linspace(0, 40, 400001)
    y = fringe_model(t, math.inf, STATE2.f_a, STATE2.delta_f)
    # The envelope |2 cos(pi df t)| vanishes every 1/df.
    env = np.abs(2 * np.cos(np.pi * STATE2.delta_f * t))
    assert np.all(np.abs(y) <= env + 1e-12)
    nodes = t[np.where(np.diff(np.sign(np.cos(np.pi * STATE2.delta_f * t))))[0]]
    assert np.diff(nodes)[0] == pytest.approx(1 / 0.093, rel=1e-4)
    assert 1 / 0.093 == pytest.approx(10.75, abs=0.01)


def test_synthesis_deterministic():
    a = synthesize(STATE2, TIMES, 0.02, seed=4)
    b = synthesize(STATE2, TIMES, 0.02, seed=4)
    np.testing.assert_array_equal(a.amplitude, b.amplitude)
    with pytest.raises(ValueError):
        synthesize(STATE2, TIMES, -1.0)


def test_background_removal_keeps_sinusoid():
    y = np.cos(2 * np.pi * 0.379 * TIMES)
    tr = RamseyTrace(TIMES, y)
    out = remove_background(tr, 5 / 0.379, [0.379])
    assert out.background_removed
    assert np.sqrt(np.mean((out.amplitude - y) ** 2)) < 0.01 * np.sqrt(np.mean(y**2))
    # Without frequency hints only the interior is clean.
    plain = remove_background(tr, 5 / 0.379)
    inner = (TIMES > 15) & (TIMES < 85)
    assert np.sqrt(np.mean((plain.amplitude - y)[inner] ** 2)) < 0.01


def test_background_removal_removes_drift():
    fringe = np.cos(2 * np.pi * 0.504 * TIMES)
    tr = RamseyTrace(TIMES, fringe + 0.3 + 0.004 * TIMES)
    out = remove_background(tr, 5 / 0.504, [0.504])
    assert np.sqrt(np.mean((out.amplitude - fringe) ** 2)) < 0.02


def test_background_removal_of_decay():
    clean = synthesize(STATE1, TIMES).amplitude
    tr = RamseyTrace(TIMES, clean + decay_background(TIMES))
    out = remove_background(tr, 5 / 0.379, [0.379])
    assert np.sqrt(np.mean((out.amplitude - clean) ** 2)) < 0.02 * np.sqrt(np.mean(clean**2))


def test_constant_trace_becomes_zero():
    out = remove_background(RamseyTrace(TIMES, np.full(TIMES.size, 0.7)), 20.0)
    np.testing.assert_array_equal(out.amplitude, 0.0)


def test_window_validation():
    tr = RamseyTrace(TIMES, np.zeros(TIMES.size))
    with pytest.raises(ValueError):
        remove_background(tr, 150.0)
    with pytest.raises(ValueError):
        remove_background(tr, 0.0)


def test_psd_single_peak():
    spec = psd(RamseyTrace(TIMES, np.cos(2 * np.pi * 0.379 * TIMES)))
    assert abs(spec.peaks[0].frequency - 0.379) <= spec.bin_width
    assert len(spec.strong_peaks()) == 1
    assert spec.bin_width == pytest.approx(spec.resolution / 4, rel=1e-3)


def test_psd_state3_two_peaks():
    spec = psd(synthesize(STATE3, TIMES))
    strong = sorted(p.frequency for p in spec.strong_peaks())
    assert len(strong) == 2
    assert abs((strong[1] - strong[0]) - 2.5) <= spec.bin_width


def test_psd_constant_has_no_peaks():
    assert psd(RamseyTrace(TIMES, np.zeros(TIMES.size))).peaks == []


def test_psd_parseval():
    y = synthesize(STATE2, TIMES, 0.02, seed=1).amplitude
    spec = psd(RamseyTrace(TIMES, y))
    assert spec.power.sum() == pytest.approx(np.sum(y**2), rel=1e-9)
    # Odd padded length folds every bin but DC.
    tr = RamseyTrace(TIMES[:-1], y[:-1])
    assert psd(tr, padding=3).power.sum() == pytest.approx(np.sum(y[:-1] ** 2), rel=1e-9)


def test_psd_peak_positions_scale_invariant():
    tr = synthesize(STATE3, TIMES, 0.02, seed=2)
    a = psd(tr)
    b = psd(RamseyTrace(TIMES, 37.0 * tr.amplitude))
    assert [p.frequency for p in a.peaks] == [p.frequency for p in b.peaks]


def test_noiseless_fit_exact():
    truth = RamseyFit(t2=32.0, f_a=0.504, delta_f=0.093, amplitude=0.8, phases=(0.3, -0.2))
    fit = fit_ramsey(synthesize(truth, TIMES))
    for name in ("t2", "f_a", "delta_f", "amplitude"):
        assert getattr(fit, name) == pytest.approx(getattr(truth, name), rel=1e-6)
    np.testing.assert_allclose(fit.phases, truth.phases, atol=1e-6)
    assert fit.residual_norm < 1e-8


def test_single_frequency_gives_zero_splitting():
    fit = fit_ramsey(synthesize(RamseyFit(40.0, 0.379, 0.0), TIMES))
    assert fit.delta_f < 1e-3
    assert fit.f_a == pytest.approx(0.379, abs=1e-3)


@pytest.mark.parametrize("truth", [STATE1, STATE2, STATE3], ids=["s1", "s2", "s3"])
def test_pipeline_round_trip(truth):
    clean = synthesize(truth, TIMES, 0.02, seed=11).amplitude
    res = analyze_ramsey(RamseyTrace(TIMES, clean + decay_background(TIMES)))
    assert res.flags == []
    fit = res.fit
    bin_width = res.spectrum.bin_width
    assert fit.t2 == pytest.approx(truth.t2, rel=0.2)
    assert abs(fit.f_a - truth.f_a) <= bin_width
    assert abs(fit.delta_f - truth.delta_f) <= bin_width


def four_frequency_trace():
    y = sum(np.cos(2 * np.pi * f * TIMES) for f in (1.0, 2.2, 3.5, 5.1)) * np.exp(-TIMES / 60)
    return RamseyTrace(TIMES, y)


def test_four_frequencies_refused():
    with pytest.raises(MultiFrequencyError) as info:
        fit_ramsey(four_frequency_trace())
    assert info.value.flag == "multi-frequency"
    assert len(info.value.peaks) == 4
    res = analyze_ramsey(four_frequency_trace())
    assert res.fit is None and res.flags == ["multi-frequency"]
    assert "t2_us" not in res.report()


def test_constant_trace_refused():
    with pytest.raises(NoPeaksError):
        fit_ramsey(RamseyTrace(TIMES, np.zeros(TIMES.size)))
    res = analyze_ramsey(RamseyTrace(TIMES, np.ones(TIMES.size)))
    assert res.flags == ["no-peaks"]


def test_random_draws():
    rng = np.random.default_rng(2024)
    ok = 0
    for k in range(20):
        truth = RamseyFit(
            t2=rng.uniform(5, 100),
            f_a=rng.uniform(0.2, 2.0),
            delta_f=rng.uniform(0, 3.0),
            phases=tuple(rng.uniform(-np.pi, np.pi, 2)),
        )
        clean = synthesize(truth, TIMES, 0.02, seed=k).amplitude
        res = analyze_ramsey(RamseyTrace(TIMES, clean + decay_background(TIMES)))
        if res.fit is None:
            continue
        bw = res.spectrum.bin_width
        hit = (
            abs(res.fit.t2 / truth.t2 - 1) <= 0.2
            and abs(res.fit.f_a - truth.f_a) <= bw
            and abs(res.fit.delta_f - truth.delta_f) <= bw
        )
        ok += hit
    assert ok >= 18


def test_compare_dispersion_reference_values():
    cmp = compare_dispersion({"12": 0.09, "23": 2.53}, {"12": 0.091, "23": 1.89})
    rows = {r.transition: r for r in cmp.rows}
    assert rows["12"].within
    assert rows["12"].fraction == pytest.approx(0.09 / 0.091)
    assert not rows["23"].within
    assert cmp.flags == ["exceeds-maximum:23"]
    assert set(cmp.report()[0]) == {"transition", "measured_mhz", "simulated_max_mhz", "fraction", "within"}


def test_compare_dispersion_simulated_only():
    from transmon_qudit.spectrum import TransmonParams, charge_dispersion

    d = charge_dispersion(TransmonParams(14.07, 0.243), 5, np.linspace(0, 0.5, 11))
    labels = [f"{i}{j}" for i, j in d.transitions]
    sim = dict(zip(labels, np.abs(d.eps_max) * 1e3))
    for row in d.eps.T:
        cmp = compare_dispersion(dict(zip(labels, np.abs(row) * 1e3)), sim, tolerance=0.0)
        assert all(0 <= r.fraction <= 1 + 1e-12 for r in cmp.rows)
        assert cmp.flags == []


def test_compare_dispersion_errors():
    with pytest.raises(KeyError):
        compare_dispersion({"34": 1.0}, {"12": 1.0})
    with pytest.raises(ValueError):
        compare_dispersion({"12": -1.0}, {"12": 1.0})
