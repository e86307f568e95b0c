"""Transmon coupled to a single cavity mode.

The joint Hamiltonian is written on the product of the lowest bare transmon
eigenstates and resonator Fock states::

    H = sum_j f_j |j><j| + f_c a^dag a + sum_ij g_ij |i><j| (a^dag + a)

with ``g_ij = g01 * <i|n|j> / |<0|n|1>|``. The full ``(a^dag + a)`` coupling is
kept (no rotating-wave approximation).

Eigenstates are grouped into ladders by the transmon state they project onto
most strongly once the resonator is traced out. A ladder that hybridizes with
another transmon state is flagged mixed and gets no dispersive shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import least_squares

from transmon_qudit.spectrum import (
    ChargeMatrixElements,
    TransmonParams,
    TransmonSpectrum,
    charge_matrix_elements,
    diagonalize,
    energies_from_frequencies,
)

MAX_STATES = 2500
NON_DISPERSIVE = "non-dispersive"

WELL_BEHAVED_PROJECTION = 0.95
MIX_FACTOR = 2.0
# Spread of rung spacings (GHz) above which a ladder counts as irregular.
SPACING_SPREAD_TOL = 50e-6
OMIT_RATIO = 1000.0


@dataclass(frozen=True)
class CavityParams:
    """Readout cavity parameters (frequencies in GHz)."""

    f_c: float
    g01: float
    n_resonator: int = 20
    kappa: float = 100e-6

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError(f"f_c must be > 0, got {self.f_c}")
        # g01 = 0 is the decoupled reference case.
        if not self.g01 >= 0:
            raise ValueError(f"g01 must be >= 0, got {self.g01}")
        if self.n_resonator < 2:
            raise ValueError("n_resonator must be >= 2")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")

    @property
    def q_t(self) -> float:
        """Loaded quality factor ``f_c / kappa``."""
        return self.f_c / self.kappa


@dataclass
class Ladder:
    index: int
    states: list[int]
    top_projection: np.ndarray
    partner: int | None
    partner_projection: np.ndarray
    spacings: np.ndarray
    mixed: bool
    reasons: list[str] = field(default_factory=list)

    @property
    def well_behaved(self) -> bool:
        return (not self.mixed) and bool(
            np.all(self.top_projection > WELL_BEHAVED_PROJECTION)
        )

    @property
    def spacing_spread(self) -> float:
        if self.spacings.size < 2:
            return 0.0
        return float(self.spacings.max() - self.spacings.min())


@dataclass
class CoupledSystem:
    """Eigenstructure of the coupled transmon-resonator system.

    ``energies`` are measured from the joint ground state. ``projections[k, i]``
    is the norm of eigenstate ``k`` restricted to transmon state ``i``.
    """

    energies: np.ndarray
    vectors: np.ndarray
    projections: np.ndarray
    ladder_label: np.ndarray
    ladders: dict[int, Ladder]
    n_transmon: int
    n_resonator: int
    f_c: float
    coupling: np.ndarray
    bare_energies: np.ndarray

    def ladder_energy(self, i: int, rung: int = 0) -> float:
        return float(self.energies[self.ladders[i].states[rung]])

    def dressed_frequency(self, i: int, j: int) -> float:
        """Transition between the zero-photon rungs of ladders ``i`` and ``j``."""
        return self.ladder_energy(j) - self.ladder_energy(i)

    @property
    def dressed_transitions(self) -> np.ndarray:
        """Adjacent dressed transitions ``f_{i,i+1}`` over classified ladders."""
        top = max(self.ladders) if self.ladders else 0
        return np.array([self.dressed_frequency(i, i + 1) for i in range(top)])

    @property
    def mixed_ladders(self) -> list[int]:
        return sorted(i for i, lad in self.ladders.items() if lad.mixed)

    @property
    def well_behaved_ladders(self) -> list[int]:
        return sorted(i for i, lad in self.ladders.items() if lad.well_behaved)

    @property
    def chi(self) -> list:
        return dispersive_shifts(self)


@dataclass(frozen=True)
class RatioTable:
    """``|Delta_ij| / g_ij`` for coupled transmon transitions."""

    ratios: dict[tuple[int, int], float]
    detunings: dict[tuple[int, int], float]
    couplings: dict[tuple[int, int], float]

    def __getitem__(self, key: tuple[int, int]) -> float:
        i, j = key
        return self.ratios[(min(i, j), max(i, j))]

    @property
    def omitted(self) -> list[tuple[int, int]]:
        return sorted(k for k, r in self.ratios.items() if r > OMIT_RATIO)

    def shown(self) -> dict[tuple[int, int], float]:
        return {k: r for k, r in self.ratios.items() if r <= OMIT_RATIO}


def coupling_matrix(elements: ChargeMatrixElements, g01: float, n_transmon: int) -> np.ndarray:
    """``g_ij`` in GHz, normalized so that ``|g_01| = g01``."""
    m = elements.matrix[:n_transmon, :n_transmon]
    return g01 * m / abs(elements.matrix[0, 1])


def build_coupled_hamiltonian(
    spectrum: TransmonSpectrum,
    elements: ChargeMatrixElements,
    cavity: CavityParams,
    n_transmon: int = 20,
) -> np.ndarray:
    """Joint Hamiltonian on the transmon (x) resonator Kronecker basis.

    Basis index is ``i * n_resonator + m`` for transmon level ``i`` and photon
    number ``m``.
    """
    if n_transmon > spectrum.n_levels_kept:
        raise ValueError(
            f"n_transmon={n_transmon} exceeds the {spectrum.n_levels_kept} levels "
            "in the spectrum"
        )
    nr = cavity.n_resonator
    if n_transmon * nr > MAX_STATES:
        raise ValueError(
            f"{n_transmon} x {nr} = {n_transmon * nr} states exceeds the "
            f"{MAX_STATES}-state limit"
        )
    a = np.diag(np.sqrt(np.arange(1, nr, dtype=float)), 1)
    x = a + a.T
    g = coupling_matrix(elements, cavity.g01, n_transmon)
    h = np.kron(np.diag(spectrum.energies[:n_transmon]), np.eye(nr))
    h = h + np.kron(np.eye(n_transmon), cavity.f_c * np.diag(np.arange(nr, dtype=float)))
    h = h + np.kron(g, x)
    return 0.5 * (h + h.conj().T)


def transmon_projections(vectors: np.ndarray, n_transmon: int, n_resonator: int) -> np.ndarray:
    """Norm of each eigenvector restricted to each bare transmon state.

    Returns an array of shape ``(n_states, n_transmon)``.
    """
    amp = vectors.reshape(n_transmon, n_resonator, -1)
    return np.sqrt(np.sum(np.abs(amp) ** 2, axis=1)).T


def classify_ladders(
    energies: np.ndarray,
    vectors: np.ndarray,
    n_transmon: int,
    n_resonator: int,
    f_c: float,
    n_ladders: int = 9,
    n_rungs: int = 3,
    spacing_tol: float = SPACING_SPREAD_TOL,
    coupling: np.ndarray | None = None,
    bare_energies: np.ndarray | None = None,
) -> CoupledSystem:
    """Group joint eigenstates into ladders and flag mixed ones.

    Eigenstate ``k`` belongs to ladder ``argmax_i projections[k, i]`` (ties go to
    the lower index). Ladder ``i`` is mixed when, within its lowest ``n_rungs``
    rungs, the two largest projections are within ``MIX_FACTOR`` of each other,
    or when its rung spacings spread by more than ``spacing_tol``.
    """
    order = np.argsort(energies, kind="stable")
    energies = np.asarray(energies)[order]
    vectors = np.asarray(vectors)[:, order]
    energies = energies - energies[0]

    proj = transmon_projections(vectors, n_transmon, n_resonator)
    # np.argmax returns the first maximum, i.e. the lower transmon index on ties.
    labels = np.argmax(proj, axis=1)

    ladders: dict[int, Ladder] = {}
    for i in range(min(n_ladders, n_transmon)):
        members = [int(k) for k in np.flatnonzero(labels == i)]
        if not members:
            continue
        rungs = members[:n_rungs]
        p = proj[rungs]
        top = p[:, i]
        others = p.copy()
        others[:, i] = -1.0
        partner = int(np.argmax(others.sum(axis=0))) if n_transmon > 1 else None
        second = others.max(axis=1)
        spacings = np.diff(energies[rungs])

        reasons = []
        if np.any(top < MIX_FACTOR * second):
            reasons.append("projection")
        if spacings.size >= 2 and spacings.max() - spacings.min() > spacing_tol:
            reasons.append("spacing")
        ladders[i] = Ladder(
            index=i,
            states=members,
            top_projection=top,
            partner=partner,
            partner_projection=p[:, partner] if partner is not None else np.zeros(len(rungs)),
            spacings=spacings,
            mixed=bool(reasons),
            reasons=reasons,
        )

    return CoupledSystem(
        energies=energies,
        vectors=vectors,
        projections=proj,
        ladder_label=labels,
        ladders=ladders,
        n_transmon=n_transmon,
        n_resonator=n_resonator,
        f_c=f_c,
        coupling=coupling if coupling is not None else np.zeros((n_transmon, n_transmon)),
        bare_energies=bare_energies if bare_energies is not None else np.zeros(n_transmon),
    )


def solve_coupled(
    params: TransmonParams,
    cavity: CavityParams,
    n_transmon: int = 20,
    n_ladders: int = 9,
) -> CoupledSystem:
    """Diagonalize the transmon, couple it to the cavity and classify ladders."""
    spectrum = diagonalize(params, n_transmon)
    elements = charge_matrix_elements(spectrum)
    h = build_coupled_hamiltonian(spectrum, elements, cavity, n_transmon)
    w, v = eigh(h)
    return classify_ladders(
        w,
        v,
        n_transmon,
        cavity.n_resonator,
        cavity.f_c,
        n_ladders=n_ladders,
        coupling=coupling_matrix(elements, cavity.g01, n_transmon),
        bare_energies=spectrum.energies[:n_transmon],
    )


def dispersive_shifts(cs: CoupledSystem) -> list:
    """``chi_i`` in GHz per ladder; mixed ladders yield ``NON_DISPERSIVE``."""
    out = []
    for i in range(max(cs.ladders) + 1 if cs.ladders else 0):
        lad = cs.ladders.get(i)
        if lad is None or len(lad.states) < 2 or lad.mixed:
            out.append(NON_DISPERSIVE)
            continue
        e0, e1 = cs.energies[lad.states[0]], cs.energies[lad.states[1]]
        out.append(float(e1 - e0 - cs.f_c))
    return out


def dispersive_ratios(
    cs: CoupledSystem, threshold: float = 1e-6, dressed: bool = True
) -> RatioTable:
    """``|f_ij - f_c| / |g_ij|`` for each coupled pair among classified ladders.

    Pairs whose coupling is below ``threshold * |g_01|`` (parity-forbidden) are
    skipped. With ``dressed=True`` the transition frequency is taken between the
    zero-photon rungs of the two ladders; otherwise bare transmon energies are
    used.
    """
    g = np.abs(cs.coupling)
    g_ref = g[0, 1] if g.shape[0] > 1 else 0.0
    ratios, detunings, couplings = {}, {}, {}
    if g_ref == 0:
        return RatioTable(ratios, detunings, couplings)
    idx = sorted(cs.ladders)
    for a, i in enumerate(idx):
        for j in idx[a + 1:]:
            if g[i, j] <= threshold * g_ref:
                continue
            if dressed:
                f_ij = abs(cs.dressed_frequency(i, j))
            else:
                f_ij = abs(cs.bare_energies[j] - cs.bare_energies[i])
            delta = f_ij - cs.f_c
            ratios[(i, j)] = float(abs(delta) / g[i, j])
            detunings[(i, j)] = float(delta)
            couplings[(i, j)] = float(g[i, j])
    return RatioTable(ratios, detunings, couplings)


@dataclass(frozen=True)
class RefinedDevice:
    params: TransmonParams
    cavity: CavityParams
    residuals: np.ndarray
    system: CoupledSystem


def refine_device(
    f01: float,
    f12: float,
    chi0: float,
    cavity: CavityParams,
    n_g: float = 0.5,
    charge_cutoff: int = 20,
    n_transmon: int = 20,
    initial: tuple[float, float, float] | None = None,
) -> RefinedDevice:
    """Fit ``(E_J, E_C, g01)`` so the dressed ``f01``, ``f12`` and ``chi_0`` match.

    Starting values come from the perturbative inversion unless ``initial`` is
    given. All quantities in GHz.
    """
    if initial is None:
        e_j0, e_c0 = energies_from_frequencies(f01, f12)
        initial = (e_j0, e_c0, cavity.g01 if cavity.g01 > 0 else 0.1)

    def model(x):
        tp = TransmonParams(x[0], x[1], n_g, charge_cutoff)
        cp = CavityParams(cavity.f_c, x[2], cavity.n_resonator, cavity.kappa)
        return solve_coupled(tp, cp, n_transmon, n_ladders=3)

    def residual(x):
        cs = model(x)
        chi = dispersive_shifts(cs)[0]
        return np.array(
            [cs.dressed_frequency(0, 1) - f01, cs.dressed_frequency(1, 2) - f12, chi - chi0]
        )

    x0 = np.asarray(initial, dtype=float)
    fit = least_squares(
        residual, x0, x_scale=np.abs(x0), xtol=1e-14, ftol=1e-14, gtol=1e-14
    )
    e_j, e_c, g01 = fit.x
    tp = TransmonParams(float(e_j), float(e_c), n_g, charge_cutoff)
    cp = CavityParams(cavity.f_c, float(g01), cavity.n_resonator, cavity.kappa)
    return RefinedDevice(tp, cp, fit.fun, solve_coupled(tp, cp, n_transmon))
