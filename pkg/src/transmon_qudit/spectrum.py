"""Charge-basis spectrum of a single transmon.

The transmon Hamiltonian ``4 E_C (n - n_g)^2 - E_J cos(delta)`` is tridiagonal
in the Cooper-pair number basis ``n = -N..N``: the charging term sits on the
diagonal and ``cos(delta)`` hops between neighbouring charge states with
amplitude ``E_J / 2``.

All energies are frequencies in GHz (h = 1). Reported spectra are shifted so
the ground state sits at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from transmon_qudit.errors import TruncationError

MIN_CHARGE_CUTOFF = 10
DEFAULT_CHARGE_CUTOFF = 20
# Probability allowed on the two outermost charge states at each edge.
EDGE_WEIGHT_TOL = 1e-8


@dataclass(frozen=True)
class TransmonParams:
    """Transmon device parameters.

    Parameters
    ----------
    e_j : float
        Josephson energy in GHz.
    e_c : float
        Charging energy in GHz.
    n_g : float
        Offset charge (dimensionless, period 1).
    charge_cutoff : int
        Basis spans Cooper-pair numbers ``-N..N`` (dimension ``2N + 1``).
    """

    e_j: float
    e_c: float
    n_g: float = 0.0
    charge_cutoff: int = DEFAULT_CHARGE_CUTOFF

    def __post_init__(self):
        # e_j = 0 is allowed: it is the pure charging-parabola limit.
        if not (np.isfinite(self.e_j) and self.e_j >= 0):
            raise ValueError(f"e_j must be finite and >= 0, got {self.e_j}")
        if not (np.isfinite(self.e_c) and self.e_c > 0):
            raise ValueError(f"e_c must be finite and > 0, got {self.e_c}")
        if not np.isfinite(self.n_g):
            raise ValueError(f"n_g must be finite, got {self.n_g}")
        if int(self.charge_cutoff) != self.charge_cutoff:
            raise ValueError("charge_cutoff must be an integer")
        if self.charge_cutoff < MIN_CHARGE_CUTOFF:
            raise TruncationError(
                f"charge_cutoff={self.charge_cutoff} is below the minimum "
                f"{MIN_CHARGE_CUTOFF}",
                min_cutoff=MIN_CHARGE_CUTOFF,
            )

    @property
    def dim(self) -> int:
        return 2 * self.charge_cutoff + 1

    @property
    def charges(self) -> np.ndarray:
        return np.arange(-self.charge_cutoff, self.charge_cutoff + 1, dtype=float)

    def replace(self, **changes) -> "TransmonParams":
        values = {
            "e_j": self.e_j,
            "e_c": self.e_c,
            "n_g": self.n_g,
            "charge_cutoff": self.charge_cutoff,
        }
        values.update(changes)
        return TransmonParams(**values)


@dataclass(frozen=True)
class TransmonSpectrum:
    """Lowest eigenpairs of the bare transmon.

    ``energies[k]`` is measured from the ground state; ``eigenvectors[:, k]``
    holds the charge-basis coefficients of level ``k``.
    """

    params: TransmonParams
    energies: np.ndarray
    eigenvectors: np.ndarray
    n_levels_kept: int
    ground_energy: float = 0.0

    @property
    def charges(self) -> np.ndarray:
        return self.params.charges

    @property
    def transition_frequencies(self) -> np.ndarray:
        """Adjacent transition frequencies ``f_{i,i+1}``."""
        return np.diff(self.energies)

    @property
    def anharmonicities(self) -> np.ndarray:
        """``alpha_{i,i+1} = f_01 - f_{i,i+1}`` for i >= 1."""
        f = self.transition_frequencies
        return f[0] - f[1:]

    def frequency(self, i: int, j: int) -> float:
        return float(self.energies[j] - self.energies[i])


@dataclass(frozen=True)
class ChargeMatrixElements:
    """Matrix ``<i|n|j>`` over the retained transmon levels."""

    matrix: np.ndarray
    n_g: float = field(default=0.0)

    def __getitem__(self, idx):
        return self.matrix[idx]

    @property
    def n_levels(self) -> int:
        return self.matrix.shape[0]

    def normalized(self) -> np.ndarray:
        """Elements in units of ``|<0|n|1>|``."""
        return self.matrix / abs(self.matrix[0, 1])


@dataclass(frozen=True)
class ChargeDispersion:
    """Per-transition frequency shifts versus offset charge.

    ``eps[k, m]`` is ``f_{k,k+1}(n_g[m]) - f_{k,k+1}(0)`` in GHz and
    ``eps_max[k] = f_{k,k+1}(1/2) - f_{k,k+1}(0)``.
    """

    n_g: np.ndarray
    eps: np.ndarray
    eps_max: np.ndarray

    @property
    def transitions(self) -> list[tuple[int, int]]:
        return [(k, k + 1) for k in range(self.eps.shape[0])]


def build_hamiltonian(params: TransmonParams) -> np.ndarray:
    """Dense charge-basis Hamiltonian in GHz."""
    diag, off = _tridiagonal(params)
    h = np.diag(diag)
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


def _tridiagonal(params: TransmonParams) -> tuple[np.ndarray, np.ndarray]:
    n = params.charges
    diag = 4.0 * params.e_c * (n - params.n_g) ** 2
    off = np.full(params.dim - 1, -0.5 * params.e_j)
    return diag, off


def edge_weights(eigenvectors: np.ndarray, n_edge: int = 2) -> np.ndarray:
    """Probability on the ``n_edge`` outermost charge states at both ends."""
    p = np.abs(eigenvectors) ** 2
    return p[:n_edge].sum(axis=0) + p[-n_edge:].sum(axis=0)


def _fix_gauge(vectors: np.ndarray) -> np.ndarray:
    # Largest-magnitude component of each column made real and positive.
    idx = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    phases = pivots / np.abs(pivots)
    return vectors / phases


def _solve(params: TransmonParams, n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    diag, off = _tridiagonal(params)
    w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_levels - 1))
    # Exact ties (E_J = 0 at a charge degeneracy) ordered by charge index.
    dominant = np.argmax(np.abs(v), axis=0)
    order = np.lexsort((dominant, np.round(w, 12)))
    return w[order], _fix_gauge(v[:, order])


def smallest_adequate_cutoff(params: TransmonParams, n_levels: int) -> int:
    """Smallest charge cutoff for which the lowest ``n_levels`` pass the edge check."""
    cutoff = max(MIN_CHARGE_CUTOFF, (n_levels + 1) // 2)
    while True:
        trial = params.replace(charge_cutoff=cutoff)
        if trial.dim > n_levels:
            _, v = _solve(trial, n_levels)
            if edge_weights(v).max() < EDGE_WEIGHT_TOL:
                return cutoff
        cutoff += 1


def diagonalize(params: TransmonParams, n_levels: int = 5) -> TransmonSpectrum:
    """Lowest ``n_levels`` eigenpairs, ground state shifted to zero.

    Raises
    ------
    TruncationError
        If any retained eigenstate leaks onto the edge of the charge basis.
    """
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    if n_levels >= params.dim:
        raise ValueError(
            f"n_levels={n_levels} must be well below the basis dimension {params.dim}"
        )
    w, v = _solve(params, n_levels)
    leak = edge_weights(v)
    if leak.max() >= EDGE_WEIGHT_TOL:
        needed = smallest_adequate_cutoff(params, n_levels)
        raise TruncationError(
            f"level {int(np.argmax(leak))} has weight {leak.max():.2e} on the "
            f"charge-basis edge; use charge_cutoff >= {needed}",
            min_cutoff=needed,
        )
    return TransmonSpectrum(
        params=params,
        energies=w - w[0],
        eigenvectors=v,
        n_levels_kept=n_levels,
        ground_energy=float(w[0]),
    )


def charge_matrix_elements(spectrum: TransmonSpectrum) -> ChargeMatrixElements:
    """``<i|n|j>`` with the bare number operator (``n_g`` does not enter)."""
    v = spectrum.eigenvectors
    n = spectrum.charges
    m = v.conj().T @ (n[:, None] * v)
    m = 0.5 * (m + m.conj().T)
    return ChargeMatrixElements(matrix=m, n_g=spectrum.params.n_g)


def charge_dispersion(
    params: TransmonParams, n_levels: int, n_g_grid: Sequence[float]
) -> ChargeDispersion:
    """Adjacent-transition charge dispersion over an offset-charge grid."""
    grid = np.asarray(n_g_grid, dtype=float)
    if grid.ndim != 1 or not np.all(np.isfinite(grid)):
        raise ValueError("n_g_grid must be a finite 1-D sequence")

    def transitions(ng: float) -> np.ndarray:
        return diagonalize(params.replace(n_g=float(ng)), n_levels).transition_frequencies

    ref = transitions(0.0)
    eps = np.empty((n_levels - 1, grid.size))
    for m, ng in enumerate(grid):
        eps[:, m] = transitions(ng) - ref
    eps_max = transitions(0.5) - ref
    return ChargeDispersion(n_g=grid, eps=eps, eps_max=eps_max)


def perturbative_f01(e_j: float, e_c: float) -> float:
    """Leading-order qubit frequency ``sqrt(8 E_J E_C) - E_C``."""
    return float(np.sqrt(8.0 * e_j * e_c) - e_c)


def energies_from_frequencies(f01: float, f12: float) -> tuple[float, float]:
    """Invert the perturbative relations for ``(E_J, E_C)``.

    Uses ``f01 - f12 ~ E_C`` and ``f01 ~ sqrt(8 E_J E_C) - E_C``.
    """
    e_c = f01 - f12
    if e_c <= 0:
        raise ValueError("f12 must be below f01 for a transmon")
    e_j = (f01 + e_c) ** 2 / (8.0 * e_c)
    return float(e_j), float(e_c)


def sequential_matrix_element_ratios(elements: ChargeMatrixElements) -> np.ndarray:
    """``|<i|n|i-1>|^2 / |<0|n|1>|^2`` for i = 1..n_levels-1.

    A harmonic oscillator gives exactly ``i``.
    """
    m = np.abs(elements.matrix)
    seq = np.array([m[i, i - 1] for i in range(1, m.shape[0])])
    return seq**2 / m[0, 1] ** 2
