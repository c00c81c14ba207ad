import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bomdlab.bomd import (NuclearState, delta_closure_consistency, hj_characteristic_check,
                          run_bomd, surface_force, verlet_step)
from bomdlab.electronic import LinearCrossing, ShiftedOscillators
from bomdlab.errors import CausticError, InvalidInputError
from bomdlab.particles import SlavedParticle, projector
from bomdlab.units import MassMetric


def sho(omega=1.0):
    return ShiftedOscillators([omega ** 2, omega ** 2], [0.0, 0.0], [0.0, 10.0])


def test_verlet_is_time_reversible():
    force = surface_force(LinearCrossing(1.0))
    s0 = NuclearState([0.4], [0.3])
    s = s0
    for _ in range(200):
        s = verlet_step(s, force, 0.01)
    for _ in range(200):
        s = verlet_step(s, force, -0.01)
    assert abs(s.q[0] - 0.4) < 1e-12 and abs(s.p[0] - 0.3) < 1e-12


@given(st.floats(0.5, 4.0), st.floats(0.5, 3.0))
def test_sho_period_with_mass(mass, omega):
    # mass M on the surface omega^2 q^2 / 2 oscillates at omega / sqrt(M)
    state = NuclearState([1.0], [0.0], 0.0, MassMetric([mass]))
    freq = omega / np.sqrt(mass)
    dt = 1e-3 / freq
    steps = int(round(2 * np.pi / freq / dt))
    traj = run_bomd(sho(omega), state, dt, steps, record_every=steps)
    assert traj.q[-1, 0] == pytest.approx(np.cos(freq * traj.t[-1]), abs=1e-5)


def test_trajectory_columns_and_table():
    traj = run_bomd(LinearCrossing(1.0), NuclearState([0.5], [0.0]), 0.01, 20, record_every=5)
    assert traj.columns == ["t", "q0", "p0", "E0", "gap", "H"]
    assert traj.table().shape == (5, 6)
    np.testing.assert_allclose(traj.t, [0.0, 0.05, 0.1, 0.15, 0.2])
    np.testing.assert_allclose(traj.gap, 2 * np.sqrt(traj.q[:, 0] ** 2 + 1.0))


def test_excited_surface_accelerates_opposite_way():
    up = run_bomd(LinearCrossing(1.0), NuclearState([0.5], [0.0]), 0.01, 10, level=1)
    down = run_bomd(LinearCrossing(1.0), NuclearState([0.5], [0.0]), 0.01, 10, level=0)
    assert up.p[-1, 0] < 0 < down.p[-1, 0]


def test_run_bomd_validates_arguments():
    s = NuclearState([0.0], [0.0])
    with pytest.raises(InvalidInputError):
        run_bomd(LinearCrossing(1.0), s, 0.01, -1)
    with pytest.raises(InvalidInputError):
        run_bomd(LinearCrossing(1.0), s, 0.01, 10, record_every=0)
    with pytest.raises(InvalidInputError):
        NuclearState([0.0, 1.0], [0.0])


def test_slaved_particle_matches_bomd():
    model = ShiftedOscillators([1.0, 1.0], [-0.5, 0.5], couplings=0.5)
    rho = projector(np.linalg.eigh(model.hamiltonian([-1.0]))[1][:, 0])
    slaved = SlavedParticle(model, [-1.0], [0.2], rho, MassMetric([1.0])).run(1e-2, 300)
    ref = run_bomd(model, NuclearState([-1.0], [0.2]), 1e-2, 300)
    assert np.max(np.abs(slaved.q - ref.q)) < 1e-12
    np.testing.assert_allclose(slaved.total, ref.total, atol=1e-12)


def test_slaved_particle_rejects_noncommuting_density():
    model = LinearCrossing(1.0)
    with pytest.raises(InvalidInputError):
        SlavedParticle(model, [0.3], [0.0], projector([1.0, 0.0]), MassMetric([1.0]))


def test_free_particle_characteristics_match_exact_action():
    free = ShiftedOscillators([0.0, 0.0], [0.0, 0.0], [0.0, 1.0])
    rep = hj_characteristic_check(free, [0.2], [0.7], 0.01, 100, metric=MassMetric([2.0]),
                                  s0=0.7 * 0.2, free_particle=True)
    assert rep.max_action_deviation < 1e-12
    assert rep.max_momentum_deviation < 1e-12
    np.testing.assert_allclose(rep.q[-1], 0.2 + 0.7 / 2.0 * 1.0)


def test_focusing_characteristics_hit_caustic():
    # a converging initial phase focuses all characteristics at t = 1
    free = ShiftedOscillators([0.0, 0.0], [0.0, 0.0], [0.0, 1.0])
    with pytest.raises(CausticError) as info:
        hj_characteristic_check(free, [1.0], [-1.0], 0.01, 200, hess_s0=[[-1.0]])
    assert info.value.time == pytest.approx(1.0, abs=0.02)
    assert info.value.partial is not None


def test_point_particle_closure_is_second_order():
    model = ShiftedOscillators([1.0, 1.0], [-0.5, 0.5], couplings=0.5)
    s0 = NuclearState([-1.0], [0.3])
    coarse = delta_closure_consistency(model, s0, 1e-3, 2000, stride=20)
    fine = delta_closure_consistency(model, s0, 1e-3, 2000, stride=10)
    assert coarse.max_residual / fine.max_residual == pytest.approx(4.0, rel=0.1)
