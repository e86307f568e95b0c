import numpy as np
import pytest

from transmon_qudit.cavity import (
    MAX_STATES,
    NON_DISPERSIVE,
    CavityParams,
    build_coupled_hamiltonian,
    dispersive_ratios,
    dispersive_shifts,
    refine_device,
    solve_coupled,
)
from transmon_qudit.spectrum import TransmonParams, charge_matrix_elements, diagonalize

F_C = 10.97537
DEVICE = TransmonParams(14.07, 0.243, n_g=0.5)
CAVITY = CavityParams(F_C, 0.1645)


@pytest.fixture(scope="module")
def coupled():
    return solve_coupled(DEVICE, CAVITY)


@pytest.fixture(scope="module")
def decoupled():
    return solve_coupled(DEVICE, CavityParams(F_C, 0.0))


def test_hamiltonian_hermitian_and_sized():
    spec = diagonalize(DEVICE, 20)
    h = build_coupled_hamiltonian(spec, charge_matrix_elements(spec), CAVITY, 20)
    assert h.shape == (400, 400)
    assert np.abs(h - h.conj().T).max() < 1e-12


def test_dimension_guard():
    spec = diagonalize(DEVICE, 20)
    big = CavityParams(F_C, 0.1645, n_resonator=200)
    with pytest.raises(ValueError):
        build_coupled_hamiltonian(spec, charge_matrix_elements(spec), big, 20)
    assert 20 * 200 > MAX_STATES


def test_coupling_normalization():
    spec = diagonalize(DEVICE, 20)
    elements = charge_matrix_elements(spec)
    h = build_coupled_hamiltonian(spec, elements, CAVITY, 20)
    # <0,1| H |1,0> = g01 * sqrt(1)
    assert abs(h[0 * 20 + 1, 1 * 20 + 0]) == pytest.approx(0.1645, rel=1e-12)


def test_decoupled_energies_are_sums(decoupled):
    bare = diagonalize(DEVICE, 20).energies
    sums = np.sort((bare[:, None] + F_C * np.arange(20)[None, :]).ravel())
    np.testing.assert_allclose(decoupled.energies, sums, atol=1e-9)


def test_decoupled_projections_and_chi(decoupled):
    p = decoupled.projections
    assert np.all((np.abs(p) < 1e-12) | (np.abs(p - 1) < 1e-12))
    assert all(abs(c) < 1e-12 for c in dispersive_shifts(decoupled))


def test_state_count_and_ordering(coupled):
    assert coupled.energies.size == 400
    assert np.all(np.diff(coupled.energies) >= 0)
    assert np.all((coupled.projections**2).sum(axis=1) <= 1 + 1e-9)


def test_dispersive_shifts(coupled):
    chi = coupled.chi
    assert chi[0] * 1e3 == pytest.approx(2.8, abs=0.05)
    assert chi[1] * 1e3 == pytest.approx(2.0, abs=0.05)
    assert chi[2] * 1e3 == pytest.approx(0.85, abs=0.05)
    assert chi[3] == NON_DISPERSIVE


def test_dressed_f01(coupled):
    # Quoted parameters are rounded; the dressed f01 lands within 2 MHz.
    assert coupled.dressed_frequency(0, 1) == pytest.approx(4.9692, abs=2e-3)


def test_ladder_classification(coupled):
    assert coupled.well_behaved_ladders == [0, 1, 2, 4, 7]
    assert coupled.mixed_ladders == [3, 5, 6, 8]
    for i in (0, 1, 2, 4, 7):
        lad = coupled.ladders[i]
        assert min(lad.top_projection) > 0.95
        assert np.ptp(lad.spacings) < 10e-6
        assert np.std(lad.spacings) < 10e-6
    # Ladder 3 shares weight with transmon state 6.
    lad3 = coupled.ladders[3]
    assert lad3.partner == 6
    assert max(coupled.projections[k, 6] for k in lad3.states) > 0.1
    assert np.ptp(lad3.spacings) > 100e-6


def test_ratio_table(coupled):
    t = dispersive_ratios(coupled)
    for key, want in {(0, 1): 36.5, (1, 2): 27.8, (3, 6): 5.8, (5, 8): 2.2}.items():
        assert t[key] == pytest.approx(want, rel=0.05)
    assert t[(1, 0)] == t[(0, 1)]
    assert all(t.ratios[k] > 1000 for k in t.omitted)
    # Parity-forbidden pairs are absent.
    assert (0, 2) not in t.ratios


def test_chi_convergence(coupled):
    bigger = solve_coupled(DEVICE, CavityParams(F_C, 0.1645, n_resonator=25), n_transmon=22)
    for a, b in zip(coupled.chi, bigger.chi):
        if a == NON_DISPERSIVE:
            assert b == NON_DISPERSIVE
        else:
            assert abs(a - b) < 1e-6


def test_refinement_reproduces_targets():
    ref = refine_device(4.9692, 4.6944, 2.8e-3, CAVITY)
    cs = ref.system
    assert cs.dressed_frequency(0, 1) == pytest.approx(4.9692, abs=1e-6)
    assert cs.dressed_frequency(1, 2) == pytest.approx(4.6944, abs=1e-6)
    assert cs.chi[0] == pytest.approx(2.8e-3, abs=1e-8)
    # The remaining transitions follow without further tuning.
    assert cs.dressed_frequency(2, 3) == pytest.approx(4.3874, abs=1e-3)
    assert cs.dressed_frequency(3, 4) == pytest.approx(4.0475, abs=1e-3)
    assert ref.params.e_j == pytest.approx(14.07, abs=0.01)
    assert ref.params.e_c == pytest.approx(0.243, abs=1e-3)
    assert ref.cavity.g01 == pytest.approx(0.1645, abs=1e-3)
