"""Ramsey fringes with beating from charge-parity switching.

Times are in microseconds and frequencies in MHz, so ``2 pi f t`` is a phase in
radians. The fringe model is a pair of cosines with one shared exponential
envelope::

    A exp(-t / T2) [cos(2 pi f_a t + phi_1) + cos(2 pi (f_a + df) t + phi_2)]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import correlate, find_peaks

from transmon_qudit.errors import MultiFrequencyError, NoPeaksError

UNIFORM_RTOL = 1e-6
DEFAULT_PADDING = 4
DEFAULT_PROMINENCE = 5.0
# Peaks weaker than this fraction of the strongest are sidelobes or noise.
STRONG_FRACTION = 0.1
WINDOW_PERIODS = 5.0
DUST = 1e-10


@dataclass(frozen=True)
class RamseyTrace:
    times: np.ndarray
    amplitude: np.ndarray
    background_removed: bool = False

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        a = np.asarray(self.amplitude, dtype=float)
        if t.ndim != 1 or t.shape != a.shape:
            raise ValueError("times and amplitude must be 1-D arrays of equal length")
        if t.size < 4:
            raise ValueError("a trace needs at least 4 samples")
        steps = np.diff(t)
        if not np.all(steps > 0) or np.ptp(steps) > UNIFORM_RTOL * steps.mean():
            raise ValueError("times must be a uniform increasing grid")
        if not np.all(np.isfinite(a)):
            raise ValueError("amplitude contains non-finite samples")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "amplitude", a)

    @property
    def spacing(self) -> float:
        return float((self.times[-1] - self.times[0]) / (self.times.size - 1))

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass
class RamseyFit:
    """Fitted fringe parameters.

    Attributes
    ----------
    t2 : float
        Dephasing time in us; ``inf`` for an undamped fringe.
    f_a : float
        Lower fringe frequency in MHz.
    delta_f : float
        Splitting to the upper fringe frequency in MHz, never negative.
    amplitude, phases
        Nuisance parameters of the model.
    """

    t2: float
    f_a: float
    delta_f: float
    residual_norm: float = 0.0
    amplitude: float = 1.0
    phases: tuple[float, float] = (0.0, 0.0)
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.t2 > 0:
            raise ValueError("t2 must be positive")
        if self.delta_f < 0:
            raise ValueError("delta_f must be non-negative")

    @property
    def frequencies(self) -> tuple[float, float]:
        return self.f_a, self.f_a + self.delta_f

    def report(self) -> dict:
        return {
            "t2_us": self.t2,
            "f_a_mhz": self.f_a,
            "delta_f_mhz": self.delta_f,
            "flags": list(self.flags),
        }


def fringe_model(times, t2, f_a, delta_f, amplitude=1.0, phases=(0.0, 0.0)) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    envelope = amplitude * np.exp(-t / t2) if math.isfinite(t2) else np.full(t.shape, float(amplitude))
    return envelope * (
        np.cos(2 * np.pi * f_a * t + phases[0])
        + np.cos(2 * np.pi * (f_a + delta_f) * t + phases[1])
    )


def synthesize(
    fit: RamseyFit, times: Sequence[float], noise_sigma: float = 0.0, seed: int | None = None
) -> RamseyTrace:
    """Fringe model evaluated on ``times`` plus Gaussian noise."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    clean = fringe_model(times, fit.t2, fit.f_a, fit.delta_f, fit.amplitude, fit.phases)
    noise = np.random.default_rng(seed).normal(0.0, noise_sigma, clean.shape) if noise_sigma else 0.0
    return RamseyTrace(np.asarray(times, dtype=float), clean + noise)


def remove_background(
    trace: RamseyTrace, window: float, fringe_freqs: Sequence[float] = ()
) -> RamseyTrace:
    """Subtract a smooth background from a trace.

    The background at each sample is the intercept of a Gaussian-weighted local
    regression (standard deviation ``window / 4``, support ``window`` on each
    side) on a constant and a slope. Each frequency in ``fringe_freqs`` adds
    ``cos``, ``sin`` and their slope-modulated versions as nuisance regressors,
    which keeps the fringe from leaking into the background near the ends of
    the trace where the kernel is one-sided.

    Raises
    ------
    ValueError
        If ``window`` is not positive or exceeds the trace duration.
    """
    if not window > 0:
        raise ValueError("window must be positive")
    if window > trace.duration:
        raise ValueError(f"window {window} us is longer than the trace ({trace.duration} us)")
    dt = trace.spacing
    half = int(np.ceil(window / dt))
    u = np.arange(-half, half + 1) * dt
    w = np.exp(-0.5 * (u / (window / 4.0)) ** 2)
    basis = [np.ones_like(u), u]
    for f in fringe_freqs:
        c, s = np.cos(2 * np.pi * f * u), np.sin(2 * np.pi * f * u)
        basis += [c, s, u * c, u * s]

    y = trace.amplitude
    mask = np.pad(np.ones_like(y), half)
    yp = np.pad(y, half)
    p = len(basis)
    gram = np.empty((y.size, p, p))
    rhs = np.empty((y.size, p))
    for a in range(p):
        rhs[:, a] = correlate(yp, w * basis[a], mode="valid")
        for b in range(a, p):
            gram[:, a, b] = gram[:, b, a] = correlate(mask, w * basis[a] * basis[b], mode="valid")
    background = np.linalg.solve(gram, rhs[..., None])[:, 0, 0]
    out = y - background
    # Rounding dust, e.g. from a constant trace, is set to exact zero.
    out[np.abs(out) <= DUST * np.max(np.abs(y), initial=0.0)] = 0.0
    return RamseyTrace(trace.times, out, True)


@dataclass(frozen=True)
class SpectralPeak:
    frequency: float
    power: float
    prominence: float


@dataclass
class PowerSpectrum:
    """One-sided power spectrum of a trace.

    ``power`` is folded so that its sum equals the sum of squared samples.
    ``bin_width`` is the spacing of the zero-padded grid and ``resolution`` the
    native ``1 / (N dt)`` spacing.
    """

    freqs: np.ndarray
    power: np.ndarray
    peaks: list[SpectralPeak]
    bin_width: float
    resolution: float
    threshold: float

    def strong_peaks(self, fraction: float = STRONG_FRACTION) -> list[SpectralPeak]:
        """Peaks whose prominence is at least ``fraction`` of the largest.

        Prominence rather than height keeps noise ripples on a broad line from
        counting as separate components.
        """
        if not self.peaks:
            return []
        top = max(p.prominence for p in self.peaks)
        return [p for p in self.peaks if p.prominence >= fraction * top]


def psd(
    trace: RamseyTrace,
    padding: int = DEFAULT_PADDING,
    prominence: float = DEFAULT_PROMINENCE,
) -> PowerSpectrum:
    """Magnitude-squared DFT of a trace with its peak list.

    Peaks are local maxima, excluding the DC bin, whose prominence exceeds
    ``prominence`` times the median bin power. They are returned strongest
    first.
    """
    if padding < 1:
        raise ValueError("padding must be >= 1")
    y = trace.amplitude
    n = y.size
    m = padding * n
    spec = np.fft.rfft(y, n=m)
    power = np.abs(spec) ** 2 / m
    # Fold negative frequencies onto positive ones.
    if m % 2 == 0:
        power[1:-1] *= 2.0
    else:
        power[1:] *= 2.0
    freqs = np.fft.rfftfreq(m, d=trace.spacing)

    threshold = prominence * float(np.median(power))
    floor = 1e-12 * float(np.sum(y**2))
    peaks: list[SpectralPeak] = []
    if float(np.max(power[1:])) > floor:
        idx, props = find_peaks(power, prominence=max(threshold, floor))
        prom = props["prominences"]
        order = np.argsort(power[idx])[::-1]
        peaks = [SpectralPeak(float(freqs[idx[k]]), float(power[idx[k]]), float(prom[k])) for k in order]
    return PowerSpectrum(
        freqs, power, peaks, float(freqs[1] - freqs[0]), 1.0 / (n * trace.spacing), threshold
    )


def _linear_start(t, y, freqs, gamma):
    env = np.exp(-gamma * t)
    cols = []
    for f in freqs:
        cols += [env * np.cos(2 * np.pi * f * t), env * np.sin(2 * np.pi * f * t)]
    a = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = float(np.linalg.norm(a @ coef - y))
    amps, phases = [], []
    for k in range(len(freqs)):
        c, s = coef[2 * k], coef[2 * k + 1]
        amps.append(math.hypot(c, s))
        phases.append(math.atan2(-s, c))
    return resid, amps, phases


def _initial_guesses(t, y, spectrum: PowerSpectrum, strong: list[SpectralPeak]):
    duration = t[-1] - t[0]
    gammas = np.concatenate([[0.0], 1.0 / np.geomspace(0.5, 50.0, 40) / duration])
    if len(strong) == 2:
        lo, hi = sorted(p.frequency for p in strong)
        pairs = [(lo, hi - lo)]
    else:
        f0 = strong[0].frequency
        pairs = [(f0, d * spectrum.resolution) for d in (0.0, 0.25, 0.5, 1.0)]
    guesses = []
    for f_a, df in pairs:
        freqs = [f_a] if df == 0 else [f_a, f_a + df]
        best = min(gammas, key=lambda g: _linear_start(t, y, freqs, g)[0])
        _, amps, phases = _linear_start(t, y, freqs, best)
        if df == 0:
            amps, phases = [amps[0] / 2.0] * 2, [phases[0]] * 2
        guesses.append(np.array([best, f_a, df, np.mean(amps), phases[0], phases[1]]))
    return guesses


def fit_ramsey(trace: RamseyTrace, spectrum: PowerSpectrum | None = None) -> RamseyFit:
    """Least-squares fit of the two-cosine fringe model.

    Starting frequencies come from the strong peaks of ``spectrum`` (computed
    from the trace when not given). The decay rate ``1/T2`` is bounded below by
    zero, and the amplitude and two phases are fitted as nuisance parameters.

    Raises
    ------
    NoPeaksError
        If the spectrum has no peak above threshold.
    MultiFrequencyError
        If more than two strong peaks are present.
    """
    if spectrum is None:
        spectrum = psd(trace)
    strong = spectrum.strong_peaks()
    if not strong:
        raise NoPeaksError("no spectral peak above threshold")
    if len(strong) > 2:
        raise MultiFrequencyError(
            f"{len(strong)} strong frequency components; the two-cosine model does not apply",
            peaks=[p.frequency for p in strong],
        )
    t = trace.times
    y = trace.amplitude
    scale = float(np.max(np.abs(y))) or 1.0

    def residual(x):
        gamma, f_a, df, amp, p1, p2 = x
        env = amp * np.exp(-gamma * t)
        model = env * (np.cos(2 * np.pi * f_a * t + p1) + np.cos(2 * np.pi * (f_a + df) * t + p2))
        return (model - y) / scale

    lower = [0.0, -np.inf, -np.inf, -np.inf, -np.inf, -np.inf]
    best = None
    for x0 in _initial_guesses(t, y, spectrum, strong):
        sol = least_squares(
            residual, x0, bounds=(lower, np.inf), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000
        )
        if best is None or sol.cost < best.cost:
            best = sol
    gamma, f_a, df, amp, p1, p2 = best.x
    if amp < 0:
        amp, p1, p2 = -amp, p1 + np.pi, p2 + np.pi
    if df < 0:
        f_a, df, p1, p2 = f_a + df, -df, p2, p1
    wrap = lambda p: float((p + np.pi) % (2 * np.pi) - np.pi)  # noqa: E731
    t2 = math.inf if gamma <= 0 else 1.0 / gamma
    return RamseyFit(
        t2=t2,
        f_a=float(f_a),
        delta_f=float(df),
        residual_norm=float(np.linalg.norm(best.fun) * scale),
        amplitude=float(amp),
        phases=(wrap(p1), wrap(p2)),
    )


@dataclass
class RamseyAnalysis:
    """Outcome of the full pipeline on one trace; ``fit`` is None when refused."""

    fit: RamseyFit | None
    spectrum: PowerSpectrum
    window: float
    flags: list[str] = field(default_factory=list)

    def report(self) -> dict:
        out = {
            "window_us": self.window,
            "bin_width_mhz": self.spectrum.bin_width,
            "peaks_mhz": [p.frequency for p in self.spectrum.strong_peaks()],
            "flags": list(self.flags),
        }
        if self.fit is not None:
            out.update({k: v for k, v in self.fit.report().items() if k != "flags"})
        return out


def fringe_candidates(spectrum: PowerSpectrum, duration: float) -> list[float]:
    """Strong peak frequencies with at least ``WINDOW_PERIODS`` periods in the trace."""
    return sorted(
        p.frequency for p in spectrum.strong_peaks() if p.frequency * duration >= WINDOW_PERIODS
    )


def analyze_ramsey(
    trace: RamseyTrace,
    window: float | None = None,
    prominence: float = DEFAULT_PROMINENCE,
    padding: int = DEFAULT_PADDING,
) -> RamseyAnalysis:
    """Background removal, spectrum and fit in one call.

    A first pass with a coarse background (half the trace length) locates the
    fringes. The default window is ``WINDOW_PERIODS`` periods of the slowest
    one, and the located frequencies are passed to the background regression.
    Refusals are reported as flags rather than raised.
    """
    coarse = remove_background(trace, trace.duration / 2.0)
    freqs = fringe_candidates(psd(coarse, padding, prominence), trace.duration)
    if window is None:
        window = min(WINDOW_PERIODS / freqs[0], trace.duration) if freqs else trace.duration / 2.0
    cleaned = remove_background(trace, window, freqs)
    spectrum = psd(cleaned, padding, prominence)
    try:
        fit = fit_ramsey(cleaned, spectrum)
        return RamseyAnalysis(fit, spectrum, window)
    except (NoPeaksError, MultiFrequencyError) as exc:
        return RamseyAnalysis(None, spectrum, window, [exc.flag])


@dataclass(frozen=True)
class DispersionRow:
    transition: str
    measured: float
    simulated: float
    fraction: float
    within: bool


@dataclass
class DispersionComparison:
    rows: list[DispersionRow]
    tolerance: float

    @property
    def flags(self) -> list[str]:
        return [f"exceeds-maximum:{r.transition}" for r in self.rows if not r.within]

    def report(self) -> list[dict]:
        return [
            {
                "transition": r.transition,
                "measured_mhz": r.measured,
                "simulated_max_mhz": r.simulated,
                "fraction": r.fraction,
                "within": r.within,
            }
            for r in self.rows
        ]


def compare_dispersion(
    measured: Mapping[str, float], simulated: Mapping[str, float], tolerance: float = 0.05
) -> DispersionComparison:
    """Compare measured splittings with simulated maximal charge dispersion.

    Both mappings are keyed by transition label and hold MHz. A row passes when
    ``measured <= simulated * (1 + tolerance)``.
    """
    rows = []
    for key in sorted(measured):
        if key not in simulated:
            raise KeyError(f"no simulated dispersion for transition {key!r}")
        m, s = float(measured[key]), float(simulated[key])
        if m < 0 or s < 0:
            raise ValueError("splittings must be non-negative")
        frac = m / s if s > 0 else (0.0 if m == 0 else math.inf)
        rows.append(DispersionRow(key, m, s, frac, m <= s * (1.0 + tolerance)))
    return DispersionComparison(rows, tolerance)
