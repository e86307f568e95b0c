"""Dispersive readout: Lorentzian cavity transmission and population inversion.

The cavity response with the transmon in state i is a complex Lorentzian
``p_i / (1 + 2j Q_t (f - f_i) / f_i)`` centred on ``f_i = f_c + chi_i``; a
mixture of states is the sum of these. Frequencies are in GHz.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from transmon_qudit.errors import IllConditionedError

MAX_CONDITION = 1e6


def lorentzian(freqs, center: float, q_t: float) -> np.ndarray:
    """Unit-height complex Lorentzian centred on ``center``."""
    f = np.asarray(freqs, dtype=float)
    return 1.0 / (1.0 + 2j * q_t * (f - center) / center)


@dataclass(frozen=True)
class TransmissionModel:
    f_c: float
    chi: np.ndarray
    q_t: float
    populations: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "chi", np.atleast_1d(np.asarray(self.chi, dtype=float)))
        object.__setattr__(
            self, "populations", np.atleast_1d(np.asarray(self.populations, dtype=float))
        )
        if self.chi.shape != self.populations.shape:
            raise ValueError("chi and populations must have the same length")
        if not self.q_t > 0:
            raise ValueError("q_t must be positive")

    @property
    def centers(self) -> np.ndarray:
        return self.f_c + self.chi

    @classmethod
    def from_centers(cls, centers, q_t: float, populations, f_c: float | None = None):
        centers = np.asarray(centers, dtype=float)
        f_c = float(centers[0]) if f_c is None else f_c
        return cls(f_c, centers - f_c, q_t, populations)


def transmission(model: TransmissionModel, freqs: Sequence[float]) -> np.ndarray:
    """Complex ``S21`` at each probe frequency."""
    f = np.asarray(freqs, dtype=float)
    out = np.zeros(f.shape, dtype=complex)
    for c, p in zip(model.centers, model.populations):
        out += p * lorentzian(f, c, model.q_t)
    return out


@dataclass
class SpectrumFit:
    centers: np.ndarray
    q_t: float
    weights: np.ndarray
    residual_norm: float
    mode: str
    flags: list[str] = field(default_factory=list)

    @property
    def populations(self) -> np.ndarray:
        """Weights normalized to unit sum."""
        return self.weights / self.weights.sum()

    def model(self) -> TransmissionModel:
        return TransmissionModel.from_centers(self.centers, self.q_t, self.weights)

    def complex_residual(self, freqs, s21) -> float:
        return float(np.linalg.norm(transmission(self.model(), freqs) - np.asarray(s21)))


def guess_peaks(freqs, s21, n_peaks: int) -> np.ndarray:
    """Centres of the ``n_peaks`` most prominent maxima of ``|S21|``."""
    mag = np.abs(np.asarray(s21))
    idx, props = find_peaks(mag, prominence=0.0)
    if idx.size < n_peaks:
        raise ValueError(f"found {idx.size} peaks, expected {n_peaks}")
    best = idx[np.argsort(props["prominences"])[::-1][:n_peaks]]
    return np.sort(np.asarray(freqs, dtype=float)[best])


def _guess_q(freqs, s21, center: float) -> float:
    f = np.asarray(freqs, dtype=float)
    mag = np.abs(np.asarray(s21))
    k = int(np.argmin(np.abs(f - center)))
    half = mag[k] / np.sqrt(2.0)
    lo = k
    while lo > 0 and mag[lo] > half:
        lo -= 1
    hi = k
    while hi < f.size - 1 and mag[hi] > half:
        hi += 1
    width = max(f[hi] - f[lo], 2 * np.median(np.diff(f)))
    return center / width


def _basis(freqs, centers, q_t) -> np.ndarray:
    return np.stack([lorentzian(freqs, c, q_t) for c in centers], axis=1)


def _linear_weights(basis: np.ndarray, s21: np.ndarray) -> np.ndarray:
    a = np.vstack([basis.real, basis.imag])
    b = np.concatenate([s21.real, s21.imag])
    return np.linalg.lstsq(a, b, rcond=None)[0]


def fit_spectrum(
    freqs: Sequence[float],
    s21: Sequence[complex],
    n_peaks: int | None = None,
    centers: Sequence[float] | None = None,
    q_t: float | None = None,
    mode: Literal["complex", "magnitude"] = "complex",
) -> SpectrumFit:
    """Least-squares fit of a sum of Lorentzians to transmission data.

    In ``complex`` mode the real and imaginary residuals are minimized jointly;
    the weights enter linearly and are eliminated at each step. ``magnitude``
    mode fits ``|S21|`` only and exists for comparison.
    """
    f = np.asarray(freqs, dtype=float)
    s = np.asarray(s21, dtype=complex)
    if centers is None:
        if n_peaks is None:
            raise ValueError("give either n_peaks or initial centers")
        centers = guess_peaks(f, s, n_peaks)
    c0 = np.sort(np.asarray(centers, dtype=float))
    n = c0.size
    if f.size < 5 * n:
        raise ValueError(f"need at least {5 * n} samples for {n} peaks")
    q0 = float(q_t) if q_t is not None else _guess_q(f, s, c0[np.argmax(np.abs(np.interp(c0, f, np.abs(s))))])

    ref = float(np.mean(c0))
    # Centres as offsets in units of the initial half width.
    scale = ref / (2.0 * q0)

    def unpack(x):
        return ref + x[:n] * scale, q0 * np.exp(x[n])

    x0 = np.concatenate([(c0 - ref) / scale, [0.0]])

    if mode == "complex":

        def residual(x):
            cs, q = unpack(x)
            b = _basis(f, cs, q)
            w = _linear_weights(b, s)
            r = b @ w - s
            return np.concatenate([r.real, r.imag])

        fit = least_squares(residual, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
        cs, q = unpack(fit.x)
        w = _linear_weights(_basis(f, cs, q), s)
    elif mode == "magnitude":
        w0 = np.abs(_linear_weights(_basis(f, c0, q0), s))
        x0 = np.concatenate([x0, w0])

        def residual(x):
            cs, q = unpack(x)
            return np.abs(_basis(f, cs, q) @ x[n + 1:]) - np.abs(s)

        fit = least_squares(residual, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
        cs, q = unpack(fit.x)
        w = fit.x[n + 1:]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    order = np.argsort(cs)
    cs, w = cs[order], w[order]
    result = SpectrumFit(cs, float(q), w, 0.0, mode)
    result.residual_norm = result.complex_residual(f, s)
    half_width = cs / (2.0 * q)
    if n > 1 and np.any(np.diff(cs) < half_width[:-1] / 4.0):
        result.flags.append("merged-peak")
    return result


@dataclass(frozen=True)
class InversionMatrix:
    """Linear map from populations to measured signal: ``V = matrix @ p``."""

    matrix: np.ndarray
    variant: Literal["printed", "standard", "calibration"]
    probe_freqs: np.ndarray | None = None

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.matrix))


def lorentzian_overlaps(centers: Sequence[float], q_t: float) -> np.ndarray:
    """``L[i, k] = L_i(f_k)``: Lorentzian centred on state i probed at state k."""
    c = np.asarray(centers, dtype=float)
    return np.stack([lorentzian(c, ci, q_t) for ci in c])


def spectral_inversion_matrix(
    centers: Sequence[float], q_t: float, variant: Literal["printed", "standard"] = "printed"
) -> InversionMatrix:
    """Overlap matrix for spectral readout.

    ``printed`` reproduces the published row pattern: diagonal ``L_00 = 1``,
    entry ``(r, c)`` equal to ``L_{c+1, 0}`` for ``c < r`` and ``L_{c, 0}`` for
    ``c > r``. ``standard`` is the physical overlap ``M[k, i] = L_i(f_k)``.
    """
    lik = lorentzian_overlaps(centers, q_t)
    n = lik.shape[0]
    if variant == "standard":
        m = lik.T.copy()
    elif variant == "printed":
        m = np.empty((n, n), dtype=complex)
        for r in range(n):
            for c in range(n):
                if c == r:
                    m[r, c] = lik[0, 0]
                elif c < r:
                    m[r, c] = lik[c + 1, 0]
                else:
                    m[r, c] = lik[c, 0]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return InversionMatrix(m, variant, np.asarray(centers, dtype=float))


def calibration_matrix(values, probe_freqs=None) -> InversionMatrix:
    """Calibration voltages: column i is the response with the qubit in ``|i>``."""
    m = np.asarray(values, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("calibration matrix must be square")
    pf = None if probe_freqs is None else np.asarray(probe_freqs, dtype=float)
    return InversionMatrix(m, "calibration", pf)


# Calibration voltages for states 0..3 (arbitrary units).
MEASURED_CALIBRATION = np.array(
    [
        [2.3, 0.0, 0.0, 0.0],
        [0.4, 2.3, 0.0, 0.0],
        [0.4, 0.25, 2.3, 0.0],
        [0.4, 0.25, 0.2, 2.3],
    ]
)


def invert_populations(v, l: InversionMatrix) -> np.ndarray:
    """Solve ``l.matrix @ p = v`` without clipping.

    ``v`` may be one vector or a batch with one vector per row.

    Raises
    ------
    IllConditionedError
        If the condition number is ``>= MAX_CONDITION``.
    """
    cond = l.condition_number
    if not cond < MAX_CONDITION:
        raise IllConditionedError(
            f"inversion matrix condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}",
            condition_number=cond,
        )
    v = np.asarray(v)
    if v.ndim == 1:
        return np.linalg.solve(l.matrix, v)
    return np.linalg.solve(l.matrix, v.T).T


@dataclass(frozen=True)
class ReadoutCorrection:
    """Decay of the mapped population during a readout of length ``t_read`` (us)."""

    t_read: float
    gamma10: float

    def __post_init__(self):
        if self.t_read < 0 or self.gamma10 < 0:
            raise ValueError("t_read and gamma10 must be non-negative")

    @property
    def lambda_bar(self) -> float:
        """Time-averaged survival ``(1/T) int_0^T exp(-Gamma_10 t) dt``."""
        x = self.gamma10 * self.t_read
        if x == 0:
            return 1.0
        return float(-np.expm1(-x) / x)


def readout_decay_correction(p_star, corr: ReadoutCorrection) -> np.ndarray:
    """Undo readout decay and renormalize.

    ``p_i = p_i* - p_0* (1/Lambda - 1)`` for i >= 1 and
    ``p_0 = p_0* - p_1* (1/Lambda - 1)``; rows are then divided by their sum.
    """
    p = np.asarray(p_star, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] < 2:
        raise ValueError("need at least two levels")
    k = 1.0 / corr.lambda_bar - 1.0
    out = p - p[:, [0]] * k
    out[:, 0] = p[:, 0] - p[:, 1] * k
    out = out / out.sum(axis=1, keepdims=True)
    return out[0] if single else out
