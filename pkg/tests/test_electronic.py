import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bomdlab.electronic import (AdiabaticTracker, LinearCrossing, ShiftedOscillators,
                                SoftCoulombChain, adiabatic_continuation, eigensolve,
                                fd_hamiltonian_gradient, ground_surface, hellmann_feynman_force,
                                phase_fix)
from bomdlab.errors import InvalidInputError, NearDegeneracyError


def random_hermitian(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


@given(st.integers(2, 12), st.integers(0, 2 ** 32 - 1))
def test_eigensolve_matches_numpy(n, seed):
    h = random_hermitian(np.random.default_rng(seed), n)
    sol = eigensolve(h)
    np.testing.assert_allclose(sol.energies, np.linalg.eigvalsh(h), atol=1e-11)
    assert np.all(np.diff(sol.energies) >= 0)


def test_eigensolve_real_symmetric_and_diagonal():
    h = np.diag([3.0, -1.0, 2.0])
    sol = eigensolve(h)
    np.testing.assert_array_equal(sol.energies, [-1.0, 2.0, 3.0])
    assert sol.gap == pytest.approx(1.0)
    assert sol.level_gap(2) == pytest.approx(1.0)


def test_eigensolve_degenerate_spectrum_is_orthonormal():
    rng = np.random.default_rng(3)
    u, _ = np.linalg.qr(rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6)))
    h = u @ np.diag([1.0, 1.0, 1.0, 2.0, 2.0, 5.0]) @ u.conj().T
    sol = eigensolve(h)
    v = sol.states
    assert np.abs(v.conj().T @ v - np.eye(6)).max() < 1e-13
    assert np.abs(h @ v - v * sol.energies).max() < 1e-12


def test_eigensolve_warm_start_agrees():
    rng = np.random.default_rng(4)
    h = random_hermitian(rng, 8)
    moved = h + 1e-3 * random_hermitian(rng, 8)
    warm = eigensolve(moved, guess=eigensolve(h).states)
    np.testing.assert_allclose(warm.energies, eigensolve(moved).energies, atol=1e-12)
    assert np.abs(warm.states.conj().T @ warm.states - np.eye(8)).max() < 1e-13


@pytest.mark.parametrize("bad", [np.ones((2, 3)), np.array([[0.0, 1.0], [2.0, 0.0]]),
                                 np.array([[np.nan, 0.0], [0.0, 1.0]])])
def test_eigensolve_rejects_invalid_matrices(bad):
    with pytest.raises(InvalidInputError):
        eigensolve(bad)


def test_linear_crossing_surfaces():
    model = LinearCrossing(4.0)
    energy, phi, gap = ground_surface(model, [3.0])
    assert energy == pytest.approx(-5.0)
    assert gap == pytest.approx(10.0)
    assert hellmann_feynman_force(model, [3.0], phi)[0] == pytest.approx(0.6)


def test_phase_fix_makes_largest_component_positive():
    out = phase_fix([0.6, 0.8j])
    np.testing.assert_allclose(out, [-0.6j, 0.8])
    with pytest.raises(InvalidInputError):
        phase_fix([0.0, 0.0])


@pytest.mark.parametrize("model, q", [
    (LinearCrossing(0.7), [0.3]),
    (ShiftedOscillators([1.0, 2.0, 0.5], [[0.0, 0.0], [1.0, 0.5], [-1.0, 0.2]],
                        [0.0, 0.3, 0.1], 0.2), [0.2, -0.4]),
    (SoftCoulombChain(16, 10.0, (1.0, 1.0)), [-0.7, 0.9]),
])
def test_analytic_gradients_match_finite_differences(model, q):
    np.testing.assert_allclose(model.hamiltonian_gradient(q), fd_hamiltonian_gradient(model, q),
                               atol=1e-7)


def test_soft_coulomb_chain_binds_and_repels():
    model = SoftCoulombChain(32, 12.0, (1.0, 1.0))
    near, _, _ = ground_surface(model, [-0.1, 0.1])
    far, _, _ = ground_surface(model, [-3.0, 3.0])
    assert near > far  # nuclear repulsion dominates at short range
    bare = SoftCoulombChain(32, 12.0, (1.0, 1.0), repulsion=False)
    assert ground_surface(bare, [-0.1, 0.1])[0] < near


def test_force_refused_near_degeneracy():
    with pytest.raises(NearDegeneracyError) as info:
        hellmann_feynman_force(LinearCrossing(1.0), [0.0], [1.0, 0.0], gap=1e-9)
    assert info.value.gap == 1e-9


def test_continuation_follows_crossing_state():
    model = LinearCrossing(1e-2)
    prev = eigensolve(model.hamiltonian([-0.5])).states[:, 0]
    k, _, phi = adiabatic_continuation(prev, eigensolve(model.hamiltonian([-0.49])))
    assert k == 0
    assert np.vdot(prev, phi).real > 0.99


def test_tracker_reports_consistent_point():
    model = ShiftedOscillators([1.0, 1.0], [-0.5, 0.5], couplings=0.5)
    tracker = AdiabaticTracker(model, [0.1])
    point = tracker.evaluate([0.1])
    energy, phi, gap = ground_surface(model, [0.1])
    assert point.energy == pytest.approx(energy)
    assert point.gap == pytest.approx(gap)
    assert abs(np.vdot(phi, tracker.state)) == pytest.approx(1.0)


@pytest.mark.parametrize("factory", [
    lambda: LinearCrossing(0.0),
    lambda: ShiftedOscillators([1.0], [0.0]),
    lambda: ShiftedOscillators([1.0, -1.0], [0.0, 0.0]),
    lambda: ShiftedOscillators([1.0, 1.0], [0.0, 0.0], couplings=[[0, 1], [2, 0]]),
    lambda: SoftCoulombChain(1),
])
def test_models_validate_parameters(factory):
    with pytest.raises(InvalidInputError):
        factory()


def test_model_rejects_wrong_coordinate_count():
    with pytest.raises(InvalidInputError):
        LinearCrossing(1.0).hamiltonian([0.0, 1.0])
