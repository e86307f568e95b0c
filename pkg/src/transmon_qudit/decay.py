"""Multi-level relaxation: rate matrix, exact evolution and iterative fitting.

Populations obey ``dp/dt = Gamma^T p`` where ``Gamma[i, j]`` (i > j) is the
decay rate from level i to level j in 1/us and the diagonal holds the total
outflow ``-sum_k Gamma[i, k]``. Upward rates are zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.linalg import expm, solve_triangular
from scipy.optimize import least_squares

log = logging.getLogger(__name__)

DEGENERACY_GAP = 1e-9
# Eigenvector conditioning beyond which the eigen route is abandoned.
MAX_EIGEN_COND = 1e8
# A rate is unconstrained when doubling it moves the residual norm by < 0.1 %.
IDENTIFIABILITY_REL = 1e-3
# Absolute floor (per sample, population units) for noiseless fits.
IDENTIFIABILITY_ABS = 1e-9


@dataclass(frozen=True)
class RateMatrix:
    """Lower-triangular decay rates ``gamma[i, j]`` (i > j) in 1/us."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("gamma must be a square matrix")
        if not np.all(np.isfinite(g)):
            raise ValueError("rates must be finite")
        if np.any(g < 0):
            raise ValueError("rates must be non-negative")
        if np.any(np.triu(g) != 0):
            raise ValueError("only downward rates (i > j) are allowed")
        object.__setattr__(self, "gamma", g)

    @classmethod
    def zeros(cls, n_levels: int) -> "RateMatrix":
        return cls(np.zeros((n_levels, n_levels)))

    @classmethod
    def from_rates(cls, n_levels: int, rates: dict[tuple[int, int], float]) -> "RateMatrix":
        g = np.zeros((n_levels, n_levels))
        for (i, j), r in rates.items():
            g[i, j] = r
        return cls(g)

    @classmethod
    def from_lifetimes(
        cls, n_levels: int, lifetimes: dict[tuple[int, int], float]
    ) -> "RateMatrix":
        """Build from inverse rates ``1/Gamma_ij`` in us."""
        return cls.from_rates(n_levels, {k: 1.0 / t for k, t in lifetimes.items()})

    @property
    def n_levels(self) -> int:
        return self.gamma.shape[0]

    @property
    def full(self) -> np.ndarray:
        """``Gamma`` including the implied diagonal."""
        g = self.gamma.copy()
        g[np.diag_indices_from(g)] = -g.sum(axis=1)
        return g

    @property
    def generator(self) -> np.ndarray:
        """``Gamma^T``; every column sums to zero."""
        return self.full.T

    def rate(self, i: int, j: int) -> float:
        return float(self.gamma[i, j])

    def channels(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.n_levels) for j in range(i)]

    def with_rates(self, rates: dict[tuple[int, int], float]) -> "RateMatrix":
        g = self.gamma.copy()
        for (i, j), r in rates.items():
            g[i, j] = r
        return RateMatrix(g)


@dataclass
class PopulationTrace:
    """Level populations sampled at ``times`` (us); shape ``(n_times, n_levels)``."""

    times: np.ndarray
    populations: np.ndarray
    provenance: Literal["measured", "synthetic"] = "measured"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.populations = np.atleast_2d(np.asarray(self.populations, dtype=float))
        if self.populations.shape[0] != self.times.size:
            raise ValueError("populations must have one row per time point")
        lo, hi = (0.0, 1.0) if self.provenance == "synthetic" and not self.metadata.get(
            "noise_sigma"
        ) else (-0.05, 1.05)
        tol = 1e-9
        if np.any(self.populations < lo - tol) or np.any(self.populations > hi + tol):
            raise ValueError(f"populations outside [{lo}, {hi}]")

    @property
    def n_levels(self) -> int:
        return self.populations.shape[1]

    @property
    def initial_state(self) -> int:
        return int(np.argmax(self.populations[0]))


def _eigen_propagators(a: np.ndarray, times: np.ndarray) -> np.ndarray | None:
    """exp(a t) for upper-triangular ``a`` with distinct diagonal, or None."""
    lam = np.diag(a).copy()
    n = lam.size
    gaps = np.abs(lam[:, None] - lam[None, :])[np.triu_indices(n, 1)]
    if gaps.size and gaps.min() <= DEGENERACY_GAP:
        return None
    # Right eigenvectors of an upper-triangular matrix by back substitution.
    v = np.eye(n)
    for k in range(n):
        for j in range(k - 1, -1, -1):
            v[j, k] = a[j, j + 1:k + 1] @ v[j + 1:k + 1, k] / (lam[k] - lam[j])
    if np.linalg.cond(v) > MAX_EIGEN_COND:
        return None
    v_inv = solve_triangular(v, np.eye(n), unit_diagonal=True)
    expo = np.exp(np.outer(times, lam))
    return np.einsum("ik,tk,kj->tij", v, expo, v_inv)


def propagators(rates: RateMatrix, times: Sequence[float]) -> np.ndarray:
    """Transfer matrices ``exp(Gamma^T t)`` for each time, shape ``(T, N, N)``."""
    t = np.asarray(times, dtype=float)
    a = rates.generator
    u = _eigen_propagators(a, t)
    if u is None:
        u = np.stack([expm(a * ti) for ti in t]) if t.size else np.zeros((0,) + a.shape)
    return u


def evolve(
    rates: RateMatrix, p0: Sequence[float], times: Sequence[float]
) -> PopulationTrace:
    """Exact populations at ``times`` starting from ``p0``."""
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (rates.n_levels,):
        raise ValueError(f"p0 must have length {rates.n_levels}")
    if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-9:
        raise ValueError("p0 must be a probability vector")
    t = np.asarray(times, dtype=float)
    p = propagators(rates, t) @ p0
    # Round-off can leave -1e-17 on levels that are exactly empty.
    p = np.where(np.abs(p) < 1e-15, 0.0, p)
    p = np.clip(p, 0.0, 1.0)
    return PopulationTrace(t, p, provenance="synthetic")


def basis_state(n_levels: int, i: int) -> np.ndarray:
    e = np.zeros(n_levels)
    e[i] = 1.0
    return e


def synthesize_traces(
    rates: RateMatrix,
    times: Sequence[float],
    initial_states: Iterable[int],
    noise_sigma: float = 0.0,
    seed: int | None = None,
) -> list[PopulationTrace]:
    """Exact traces from each initial basis state with additive Gaussian noise."""
    rng = np.random.default_rng(seed)
    out = []
    for i in initial_states:
        tr = evolve(rates, basis_state(rates.n_levels, i), times)
        p = tr.populations
        if noise_sigma > 0:
            p = p + rng.normal(0.0, noise_sigma, size=p.shape)
            p = np.clip(p, -0.05, 1.05)
        out.append(
            PopulationTrace(
                tr.times,
                p,
                provenance="synthetic",
                metadata={"initial_state": int(i), "noise_sigma": noise_sigma, "seed": seed},
            )
        )
    return out


@dataclass
class StageResult:
    initial_state: int
    fitted: list[tuple[int, int]]
    residual_norm: float
    cost_sensitivity: dict[tuple[int, int], float]


@dataclass
class RateFit:
    rates: RateMatrix
    stages: list[StageResult]
    uncertainties: dict[tuple[int, int], float]
    unconstrained: list[tuple[int, int]]

    @property
    def flags(self) -> list[str]:
        return [f"unconstrained:g{i}{j}" for i, j in self.unconstrained]

    @property
    def residual_norm(self) -> float:
        return float(np.sqrt(sum(s.residual_norm**2 for s in self.stages)))

    def report(self) -> dict:
        """Serializable rate report (rates in 1/us, inverse rates in us)."""
        rates, inverse, sigma = {}, {}, {}
        for i, j in self.rates.channels():
            key = f"g{i}{j}"
            r = self.rates.rate(i, j)
            rates[key] = r
            inverse[key] = (1.0 / r) if r > 0 else None
            if (i, j) in self.uncertainties:
                sigma[key] = self.uncertainties[(i, j)]
        return {
            "rates_per_us": rates,
            "inverse_rates_us": inverse,
            "uncertainties_per_us": sigma,
            "flags": self.flags,
        }


def _initial_guess(trace: PopulationTrace, i: int, prior: RateMatrix) -> np.ndarray:
    # Total outflow of level i from the log-slope of its early decay.
    p = trace.populations[:, i]
    t = trace.times
    mask = (p > 0.3) & (p < 0.999)
    if mask.sum() >= 3:
        slope = np.polyfit(t[mask], np.log(p[mask]), 1)[0]
        total = max(-slope, 1e-6)
    else:
        total = max(prior.gamma[i - 1].sum() * (i + 1) / max(i, 1), 1e-3)
    x = np.full(i, 0.01 * total)
    x[i - 1] = 0.97 * total
    return x


def fit_rates(
    traces: Sequence[PopulationTrace],
    model: Literal["full", "sequential"] = "full",
    n_levels: int | None = None,
) -> RateFit:
    """Iterative stage-wise fit of decay rates.

    Stage i uses the trace prepared in ``|i>`` and fits ``Gamma[i, k]`` for all
    k < i (only ``k = i - 1`` when ``model="sequential"``) with every rate from
    earlier stages frozen. The objective is the unweighted sum of squared
    residuals over all level curves of that trace.
    """
    by_state = {}
    for tr in traces:
        i = int(tr.metadata.get("initial_state", tr.initial_state))
        if i == 0:
            continue
        if i in by_state:
            raise ValueError(f"two traces start from state {i}")
        by_state[i] = tr
    if not by_state:
        raise ValueError("no trace starts from an excited state")
    top = max(by_state)
    missing = [i for i in range(1, top + 1) if i not in by_state]
    if missing:
        raise ValueError(f"missing traces for initial states {missing}")
    n = n_levels or max(top + 1, max(tr.n_levels for tr in traces))

    rates = RateMatrix.zeros(n)
    stages: list[StageResult] = []
    sigma: dict[tuple[int, int], float] = {}
    unconstrained: list[tuple[int, int]] = []

    for i in range(1, top + 1):
        tr = by_state[i]
        data = np.zeros((tr.times.size, n))
        data[:, : tr.n_levels] = tr.populations
        channels = [(i, k) for k in range(i)] if model == "full" else [(i, i - 1)]
        p0 = basis_state(n, i)

        def residual(x, channels=channels, data=data, tr=tr, p0=p0):
            trial = rates.with_rates(dict(zip(channels, x)))
            pred = propagators(trial, tr.times) @ p0
            return (pred - data).ravel()

        x0 = _initial_guess(tr, i, rates)
        if model == "sequential":
            x0 = x0[-1:]
        fit = least_squares(
            residual,
            x0,
            bounds=(0.0, np.inf),
            x_scale=np.maximum(np.abs(x0), 1e-6),
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
            max_nfev=2000,
        )
        rates = rates.with_rates(dict(zip(channels, fit.x)))
        norm = float(np.linalg.norm(fit.fun))

        # Local curvature-based uncertainty.
        dof = max(fit.fun.size - len(channels), 1)
        s2 = norm**2 / dof
        try:
            cov = np.linalg.pinv(fit.jac.T @ fit.jac) * s2
            for c, var in zip(channels, np.diag(cov)):
                sigma[c] = float(np.sqrt(max(var, 0.0)))
        except np.linalg.LinAlgError:
            pass

        sensitivity = {}
        for c, x in zip(channels, fit.x):
            doubled = fit.x.copy()
            doubled[channels.index(c)] = 2.0 * x
            alt = float(np.linalg.norm(residual(doubled)))
            floor = IDENTIFIABILITY_ABS * np.sqrt(fit.fun.size)
            rel = (alt - norm) / norm if norm > 0 else np.inf
            sensitivity[c] = rel
            if alt - norm < max(IDENTIFIABILITY_REL * norm, floor):
                unconstrained.append(c)
        stages.append(StageResult(i, channels, norm, sensitivity))
        log.debug("stage %d: %s residual %.3e", i, fit.x, norm)

    return RateFit(rates, stages, sigma, unconstrained)


@dataclass(frozen=True)
class ScalingReport:
    levels: np.ndarray
    ratios: np.ndarray
    slope: float
    intercept: float


def scaling_check(rates: RateMatrix) -> ScalingReport:
    """``Gamma[i, i-1] / (i * Gamma[1, 0])`` and a linear fit of ``Gamma[i, i-1]`` vs i."""
    g10 = rates.rate(1, 0)
    if g10 <= 0:
        raise ValueError("Gamma_10 must be positive")
    levels = np.arange(1, rates.n_levels)
    seq = np.array([rates.rate(i, i - 1) for i in levels])
    slope, intercept = np.polyfit(levels, seq, 1) if levels.size > 1 else (seq[0], 0.0)
    return ScalingReport(levels, seq / (levels * g10), float(slope), float(intercept))


# Measured five-level decay times (us); used for fixtures and defaults.
MEASURED_LIFETIMES_US = {
    (1, 0): 84.0,
    (2, 1): 41.0,
    (3, 2): 30.0,
    (4, 3): 22.0,
    (2, 0): 1812.0,
    (3, 1): 1314.0,
    (3, 0): 2631.0,
}
