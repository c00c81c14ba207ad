import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bomdlab.bohmion import (BohmionEnsemble, BohmionIntegrator, bohmion_energy, bohmion_step,
                             coupling_matrix, coupling_with_gradient, run_bohmion,
                             run_bohmion_classical)
from bomdlab.electronic import LinearCrossing, ShiftedOscillators
from bomdlab.errors import InvalidInputError, QuadratureError
from bomdlab.kernels import (GaussianKernel, PhaseSpaceKernel, TensorGrid, self_checked,
                             window_grid)
from bomdlab.koopmon import (HybridHamiltonian, KoopmonEnsemble, iab_gradient, iab_integral,
                             koopmon_energy, koopmon_step, kvh_phase, run_koopmon)
from bomdlab.bomd import NuclearState, run_bomd
from bomdlab.particles import projector
from bomdlab.units import MassMetric


def two_bohmions(mu=1e-3, alpha=0.5, metric=None):
    return BohmionEnsemble.adiabatic(LinearCrossing(1.0), [0.4, 0.6], [[-0.3], [0.2]],
                                     [[0.2], [-0.1]], GaussianKernel(alpha, 1), mu, metric)


def two_koopmons(mu=1e-3):
    return KoopmonEnsemble.adiabatic(LinearCrossing(1.0), [0.5, 0.5], [[-0.2], [0.3]],
                                     [[0.1], [-0.2]], PhaseSpaceKernel(0.5, 0.5), mu)


@given(st.floats(0.1, 3.0), st.integers(1, 3))
def test_gaussian_kernel_is_normalized(alpha, dim):
    k = GaussianKernel(alpha, dim)
    grid = window_grid(np.zeros((1, dim)), alpha, spacing_fraction=0.25 if dim == 3 else 0.125,
                       window=8.0)
    total = grid.weights @ k.evaluate(grid.points)
    assert total == pytest.approx(1.0, rel=1e-8)


def test_kernel_gradient_and_hessian_match_differences():
    k = GaussianKernel(0.7, 2)
    x = np.array([0.3, -0.2])
    h = 1e-6
    fd = [(k.evaluate(x + h * e) - k.evaluate(x - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(k.gradient(x), fd, rtol=1e-7)
    v = np.array([0.5, 1.0])
    fd2 = (k.gradient(x + h * v) - k.gradient(x - h * v)) / (2 * h)
    np.testing.assert_allclose(k.hessian_dot(x, v), fd2, rtol=1e-6)
    pk = PhaseSpaceKernel(0.4, 0.9)
    z = np.array([0.1, -0.3])
    fdp = [(pk.gradient(z + h * e) - pk.gradient(z - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(pk.hessian(z), np.array(fdp).T, rtol=1e-6, atol=1e-12)


def test_self_checked_flags_unresolved_integrand():
    grid = TensorGrid.covering([-1.0], [1.0], 0.5)
    with pytest.raises(QuadratureError):
        self_checked(lambda g: g.weights @ np.cos(20 * g.points[:, 0]), grid)
    assert self_checked(lambda g: g.weights @ np.ones(len(g.weights)), grid) == pytest.approx(2.0)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan])
def test_kernel_rejects_bad_width(bad):
    with pytest.raises(InvalidInputError):
        GaussianKernel(bad)


def test_coupling_matrix_is_symmetric_and_translation_invariant():
    ens = two_bohmions()
    c = coupling_matrix(ens)
    np.testing.assert_allclose(c, c.T, rtol=1e-12)
    shifted = BohmionEnsemble(ens.weights, ens.q + 3.7, ens.p, ens.rho, ens.kernel, ens.mu)
    np.testing.assert_allclose(coupling_matrix(shifted), c, rtol=1e-8)


def test_coupling_gradient_matches_differences():
    ens = two_bohmions()
    _, grad = coupling_with_gradient(ens)
    h = 1e-5
    for a in range(2):
        qp, qm = ens.q.copy(), ens.q.copy()
        qp[a, 0] += h
        qm[a, 0] -= h
        cp = coupling_matrix(BohmionEnsemble(ens.weights, qp, ens.p, ens.rho, ens.kernel, ens.mu))
        cm = coupling_matrix(BohmionEnsemble(ens.weights, qm, ens.p, ens.rho, ens.kernel, ens.mu))
        fd = (cp - cm) / (2 * h)
        np.testing.assert_allclose(grad[:, :, a, 0], fd, rtol=1e-5, atol=1e-8)


def test_single_pure_bohmion_kernel_energy():
    # one pure particle carries mu / (8 G alpha^2) on top of its surface energy
    model = LinearCrossing(1.0)
    metric = MassMetric([2.0])
    ens = BohmionEnsemble.adiabatic(model, [1.0], [[0.1]], [[0.0]], GaussianKernel(0.5), 1e-2,
                                    metric)
    surface = -np.sqrt(0.1 ** 2 + 1.0)
    assert bohmion_energy(ens, model) == pytest.approx(surface + 1e-2 / (8 * 2.0 * 0.25),
                                                       rel=1e-10)


def test_bohmion_short_run_conserves_invariants():
    ens = two_bohmions()
    run = run_bohmion(ens, LinearCrossing(1.0), 1e-3, 200, record_every=50)
    assert run.q.shape == (5, 2, 1)
    drift = np.max(np.abs(run.energy - run.energy[0])) / abs(run.energy[0])
    assert drift < 1e-7
    assert np.max(run.trace_error) < 1e-12
    assert np.max(np.abs(run.purity_min - 1.0)) < 1e-12


def test_bohmion_step_reverses():
    ens0 = two_bohmions(mu=1e-2)
    integ = BohmionIntegrator(LinearCrossing(1.0))
    ens = ens0
    for _ in range(50):
        ens = integ.step(ens, 0.01)
    for _ in range(50):
        ens = integ.step(ens, -0.01)
    np.testing.assert_allclose(ens.q, ens0.q, atol=1e-12)
    np.testing.assert_allclose(ens.rho, ens0.rho, atol=1e-12)


def test_zero_mu_step_follows_surface():
    ens = two_bohmions(mu=0.0)
    model = LinearCrossing(1.0)
    stepped = ens
    for _ in range(100):
        stepped = bohmion_step(stepped, model, 1e-2)
    classical = run_bohmion_classical(ens, model, 1e-2, 100)
    for a, tr in enumerate(classical.trajectories):
        np.testing.assert_allclose(stepped.q[a], tr.q[-1], rtol=0, atol=1e-13)
    ref = run_bomd(model, NuclearState(ens.q[1], ens.p[1]), 1e-2, 100)
    assert np.max(np.abs(classical.trajectories[1].q - ref.q)) < 1e-12


def test_zero_mu_needs_eigenprojectors():
    ens = BohmionEnsemble([1.0], [[0.3]], [[0.0]], [projector([1.0, 0.0])], GaussianKernel(0.5),
                          0.0)
    with pytest.raises(InvalidInputError):
        bohmion_step(ens, LinearCrossing(1.0), 0.01)


def test_run_bohmion_rejects_zero_mu():
    with pytest.raises(InvalidInputError):
        run_bohmion(two_bohmions(mu=0.0), LinearCrossing(1.0), 0.01, 10)


@pytest.mark.parametrize("weights", [[0.5, 0.6], [1.0, 0.0], [0.5]])
def test_ensemble_validates_weights(weights):
    with pytest.raises(InvalidInputError):
        BohmionEnsemble.adiabatic(LinearCrossing(1.0), weights, [[0.0], [1.0]], [[0.0], [0.0]],
                                  GaussianKernel(0.5), 1e-3)


def test_ensemble_validates_densities():
    bad = np.array([[[1.0, 0.0], [0.0, 0.5]]])
    with pytest.raises(InvalidInputError):
        BohmionEnsemble([1.0], [[0.0]], [[0.0]], bad, GaussianKernel(0.5), 1e-3)
    negative = np.array([[[1.5, 0.0], [0.0, -0.5]]])
    with pytest.raises(InvalidInputError):
        BohmionEnsemble([1.0], [[0.0]], [[0.0]], negative, GaussianKernel(0.5), 1e-3)


def test_iab_vanishes_for_constant_hamiltonian():
    flat = ShiftedOscillators([0.0, 0.0], [0.0, 0.0], [0.0, 0.3], couplings=0.2)
    ens = KoopmonEnsemble.adiabatic(flat, [0.3, 0.7], [[0.0], [0.4]], [[0.1], [-0.2]],
                                    PhaseSpaceKernel(0.5, 0.5), 1e-3)
    assert np.max(np.abs(iab_integral(ens, HybridHamiltonian(flat, kinetic=False)))) < 1e-12


def test_iab_gradient_matches_differences():
    ens = two_koopmons()
    hybrid = HybridHamiltonian(LinearCrossing(1.0))
    _, grad = iab_gradient(ens, hybrid)
    h = 1e-5
    qp, qm = ens.q.copy(), ens.q.copy()
    qp[0, 0] += h
    qm[0, 0] -= h
    ip = iab_integral(KoopmonEnsemble(ens.weights, qp, ens.p, ens.rho, ens.kernel, ens.mu), hybrid)
    im = iab_integral(KoopmonEnsemble(ens.weights, qm, ens.p, ens.rho, ens.kernel, ens.mu), hybrid)
    fd = (ip - im) / (2 * h)
    # I_ab is Hermitized after the fact, so compare the Hermitian part
    analytic = grad[:, :, 0, 0]
    analytic = 0.5 * (analytic + np.conj(np.swapaxes(analytic, -1, -2)))
    scale = np.max(np.abs(fd))
    assert scale > 0
    assert np.max(np.abs(analytic - fd)) < 1e-5 * scale


@pytest.mark.slow
def test_koopmon_short_run_conserves_energy_and_trace():
    ens = two_koopmons()
    hybrid = HybridHamiltonian(LinearCrossing(1.0))
    run = run_koopmon(ens, hybrid, 1e-3, 60, record_every=20)
    drift = np.max(np.abs(run.energy - run.energy[0])) / abs(run.energy[0])
    assert drift < 1e-7
    assert np.max(run.trace_error) < 1e-11
    assert koopmon_energy(run.final, hybrid) == pytest.approx(run.energy[-1], rel=1e-13)


@pytest.mark.slow
def test_koopmon_step_reverses():
    ens0 = two_koopmons()
    hybrid = HybridHamiltonian(LinearCrossing(1.0))
    ens = koopmon_step(koopmon_step(ens0, hybrid, 1e-2), hybrid, -1e-2)
    np.testing.assert_allclose(ens.q, ens0.q, atol=1e-12)
    np.testing.assert_allclose(ens.p, ens0.p, atol=1e-12)


@settings(max_examples=10)
@given(st.floats(0.1, 2.0))
def test_kvh_phase_of_free_particle(k):
    free = ShiftedOscillators([0.0, 0.0], [0.0, 0.0], [0.0, 1.0])
    traj = run_bomd(free, NuclearState([0.0], [k]), 0.01, 100)
    assert kvh_phase(traj).delta == pytest.approx(0.5 * k * k, rel=1e-12)


def test_kvh_phase_converges_at_second_order():
    sho = ShiftedOscillators([1.0, 1.0], [0.0, 0.0], [0.0, 10.0])
    deltas = []
    for n in (500, 1000):
        traj = run_bomd(sho, NuclearState([1.0], [0.0]), 2 * np.pi / n, n)
        deltas.append(abs(kvh_phase(traj).delta))
    assert deltas[0] / deltas[1] == pytest.approx(4.0, rel=0.05)
