"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line."""

import time

import numpy as np
import pytest

from bomdlab.bohmion import (BohmionEnsemble, BohmionIntegrator, coupling_matrix, run_bohmion,
                             run_bohmion_classical)
from bomdlab.bomd import NuclearState, run_bomd
from bomdlab.electronic import (LinearCrossing, ShiftedOscillators, eigensolve, ground_surface,
                                hellmann_feynman_force)
from bomdlab.kernels import GaussianKernel, PhaseSpaceKernel
from bomdlab.koopmon import (HybridHamiltonian, KoopmonEnsemble, iab_integral, kvh_phase,
                             run_koopmon_classical)
from bomdlab.madelung import (Grid, GridWavefunction, TDSEPropagator, electronic_potential,
                              gaussian_packet, hydro_residuals, regauge, run_tdse, velocity_field,
                              xf_extract)
from bomdlab.units import MassMetric, PhysicalParams, nondimensionalize

pytestmark = pytest.mark.slow

GAPPED = dict(omegas=[1.0, 1.0], centers=[-0.5, 0.5], offsets=[0.0, 0.0], couplings=0.5)


def gapped_model():
    return ShiftedOscillators(**GAPPED)


def harmonic_model(omega=1.0):
    # ground surface omega^2 q^2 / 2 with an uncoupled level far above
    return ShiftedOscillators([omega ** 2, omega ** 2], [0.0, 0.0], [0.0, 10.0])


def interior(fields):
    # points whose central-difference neighbours are also on the mask
    m = fields.mask
    for axis in range(m.ndim):
        m = m & np.roll(fields.mask, 1, axis) & np.roll(fields.mask, -1, axis)
    return m


def relative_drift(energy):
    energy = np.asarray(energy)
    return float(np.max(np.abs(energy - energy[0])) / abs(energy[0]))


def test_eigensolver_residuals(acceptance):
    rng = np.random.default_rng(1)
    worst_res = worst_orth = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 65))
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        h = 0.5 * (a + a.conj().T)
        sol = eigensolve(h)
        v = sol.states
        res = np.linalg.norm(h @ v - v * sol.energies, axis=0).max() / (1 + np.linalg.norm(h))
        worst_res = max(worst_res, res)
        worst_orth = max(worst_orth, np.abs(v.conj().T @ v - np.eye(n)).max())
    ok = worst_res <= 1e-10 and worst_orth <= 1e-12
    acceptance(1, "eigensolver on 1000 Hermitian matrices", ok,
               f"residual {worst_res:.2e} (<=1e-10), orthonormality {worst_orth:.2e} (<=1e-12)")
    assert ok


def test_hellmann_feynman_vs_finite_differences(acceptance):
    model = gapped_model()
    rng = np.random.default_rng(2)
    h = 1e-4
    worst, min_gap = 0.0, np.inf
    for q in rng.uniform(-2.0, 2.0, 100):
        _, phi, gap = ground_surface(model, [q])
        min_gap = min(min_gap, gap)
        force = hellmann_feynman_force(model, [q], phi)[0]
        e_plus = ground_surface(model, [q + h])[0]
        e_minus = ground_surface(model, [q - h])[0]
        fd = -(e_plus - e_minus) / (2 * h)
        worst = max(worst, abs(force - fd) / abs(fd))
    ok = worst <= 1e-6 and min_gap >= 0.1
    acceptance(2, "Hellmann-Feynman force vs central differences", ok,
               f"max relative error {worst:.2e} (<=1e-6), min gap {min_gap:.3f}")
    assert ok


def test_bomd_conservation_and_order(acceptance):
    model = LinearCrossing(1.0)
    traj = run_bomd(model, NuclearState([2.0], [0.0]), 1e-3, 100_000, record_every=100)
    drift = relative_drift(traj.total)

    sho = harmonic_model()
    errors = []
    for dt in (0.02, 0.01):
        tr = run_bomd(sho, NuclearState([1.0], [0.0]), dt, int(round(10.0 / dt)))
        errors.append(np.max(np.abs(tr.q[:, 0] - np.cos(tr.t))))
    ratio = errors[0] / errors[1]
    ok = drift <= 1e-8 and 3.2 <= ratio <= 4.8
    acceptance(3, "BOMD energy drift and second-order SHO error", ok,
               f"drift {drift:.2e} over 1e5 steps (<=1e-8), error ratio {ratio:.3f} (4 +- 20%)")
    assert ok


def test_small_mu_limit_approaches_bomd(acceptance):
    model = gapped_model()
    start = time.perf_counter()
    q0, dt, T = -1.0, 1e-3, 1.0
    steps = int(round(T / dt))
    q_bomd = run_bomd(model, NuclearState([q0], [0.0]), dt, steps).q[-1, 0]
    grid = Grid.line(1024, -5.0, 5.0)
    errors = []
    for mu in (1e-2, 1e-3, 1e-4):
        psi = gaussian_packet(grid, model, mu, [q0], [0.0], mu ** 0.25 / np.sqrt(2))
        run = run_tdse(psi, model, dt, steps, record_every=steps)
        errors.append(abs(run.mean_r[-1, 0] - q_bomd))
    elapsed = time.perf_counter() - start
    ok = errors[0] > errors[1] > errors[2] and elapsed <= 600
    acceptance(4, "TDSE <r>(T) approaches q_BOMD(T) as mu -> 0", ok,
               "errors " + ", ".join(f"{e:.3e}" for e in errors)
               + f" for mu = 1e-2, 1e-3, 1e-4 ({elapsed:.0f} s)")
    assert ok


def test_single_bohmion_at_zero_mu_is_bomd(acceptance):
    model = LinearCrossing(1.0)
    ref = run_bomd(model, NuclearState([0.3], [0.5]), 1e-3, 10_000)
    ens = BohmionEnsemble.adiabatic(model, [1.0], [[0.3]], [[0.5]], GaussianKernel(0.5, 1), 0.0)
    tr = run_bohmion_classical(ens, model, 1e-3, 10_000).trajectories[0]
    err = max(np.max(np.abs(tr.q - ref.q)), np.max(np.abs(tr.p - ref.p)))
    ok = err <= 1e-12
    acceptance(5, "P=1, mu=0 bohmion reproduces BOMD per step", ok,
               f"max |dq|,|dp| over 1e4 steps {err:.2e} (<=1e-12)")
    assert ok


def test_kernel_self_coupling(acceptance):
    model = LinearCrossing(1.0)
    metric = MassMetric([2.0])
    alphas = np.array([0.2, 0.5, 1.0])
    c11 = []
    for alpha in alphas:
        ens = BohmionEnsemble.adiabatic(model, [1.0], [[0.1]], [[0.0]], GaussianKernel(alpha, 1),
                                        1e-3, metric)
        c11.append(coupling_matrix(ens)[0, 0])
    c11 = np.array(c11)
    rel = np.max(np.abs(c11 * 2.0 * alphas ** 2 - 1.0))
    slope = np.polyfit(np.log(alphas), np.log(c11), 1)[0]
    ok = rel <= 1e-6 and abs(slope + 2.0) <= 0.04
    acceptance(6, "kernel C_11 = 1/(G alpha^2)", ok,
               f"max relative error {rel:.2e} (<=1e-6), log-log slope {slope:.6f} (-2 +- 2%)")
    assert ok


def test_finite_mu_bohmion_invariants(acceptance):
    model = LinearCrossing(1.0)
    ens0 = BohmionEnsemble.adiabatic(model, [0.4, 0.6], [[-0.3], [0.2]], [[0.2], [-0.1]],
                                     GaussianKernel(0.5, 1), 1e-3)
    run = run_bohmion(ens0, model, 1e-3, 10_000, record_every=100)
    drift = relative_drift(run.energy)
    trace = float(np.max(run.trace_error))
    purity = float(np.max(np.abs(run.purity_min - 1.0)))

    integ = BohmionIntegrator(model)
    ens = run.final
    for _ in range(10_000):
        ens = integ.step(ens, -1e-3)
    rev = max(np.max(np.abs(ens.q - ens0.q)), np.max(np.abs(ens.p - ens0.p)))
    ok = drift <= 1e-6 and trace <= 1e-10 and purity <= 1e-10 and rev <= 1e-10
    acceptance(7, "finite-mu bohmions: energy, spectrum, reversibility", ok,
               f"drift {drift:.2e} (<=1e-6), trace {trace:.1e}, purity {purity:.1e} (<=1e-10), "
               f"reversal {rev:.1e} (<=1e-10)")
    assert ok


def smooth_two_level_field(grid, mu, rng, modes=3):
    x = grid.coords[..., 0]
    length = grid.upper[0] - grid.lower[0]
    comps = []
    for _ in range(2):
        c = np.zeros_like(x, dtype=complex)
        for k in range(1, modes + 1):
            amp = rng.standard_normal() + 1j * rng.standard_normal()
            c += amp * np.exp(2j * np.pi * k * (x - grid.lower[0]) / length) / k
        comps.append(c + rng.standard_normal())
    phi = np.stack(comps, axis=-1)
    phi /= np.linalg.norm(phi, axis=-1, keepdims=True)
    density = np.exp(-x ** 2)
    phase = rng.uniform(-1, 1) * x + 0.3 * rng.standard_normal() * x ** 2
    omega = np.sqrt(density) * np.exp(1j * phase)
    return GridWavefunction.normalized(grid, omega[:, None] * phi, mu, MassMetric([1.7]))


def test_electronic_potential_identity(acceptance):
    rng = np.random.default_rng(8)
    grid = Grid.line(256, -8.0, 8.0)
    worst = scale = 0.0
    for _ in range(20):
        fields = xf_extract(smooth_two_level_field(grid, 1e-3, rng))
        pot = electronic_potential(fields)
        m = interior(fields)
        worst = max(worst, float(np.max(np.abs(pot.eps[m] - pot.qgt_trace[m]))))
        scale = max(scale, float(np.max(np.abs(pot.eps[m]))))
    ok = np.isfinite(worst) and scale > 0 and worst <= 1e-10
    acceptance(8, "eps(phi) = (mu/2) Tr(G^-1 Re Q) on 20 random fields", ok,
               f"max pointwise difference {worst:.2e} (<=1e-10; max |eps| {scale:.2e})")
    assert ok


def packet_residuals(points, dt, mu=1e-3, t_eval=0.5):
    model = gapped_model()
    grid = Grid.line(points, -4.0, 4.0)
    psi = gaussian_packet(grid, model, mu, [-1.0], [0.3], 0.15)
    k = int(round(t_eval / dt))
    run = run_tdse(psi, model, dt, k + 1, keep_snapshots=True)
    return hydro_residuals(run.snapshots[k - 1:k + 2], model).worst()


def discrete_ground_state(points, mu, model, lower=-3.0, upper=3.0):
    grid = Grid.line(points, lower, upper)
    k = grid.wavenumbers[0]
    kinetic = np.real(np.fft.ifft(0.5 * mu * k[:, None] ** 2 * np.fft.fft(np.eye(points), axis=0),
                                  axis=0))
    levels = model.dim
    h = np.kron(kinetic, np.eye(levels)).astype(complex)
    for i, r in enumerate(grid.coords):
        h[i * levels:(i + 1) * levels, i * levels:(i + 1) * levels] += model.hamiltonian(r)
    _, vecs = np.linalg.eigh(h)
    return GridWavefunction.normalized(grid, vecs[:, 0].reshape(points, levels), mu)


def stationary_residuals(points, mu=1e-3):
    model = gapped_model()
    psi = discrete_ground_state(points, mu, model)
    prop = TDSEPropagator(psi.grid, model, mu, 1e-3)
    snaps = [psi]
    for _ in range(2):
        snaps.append(prop.step(snaps[-1]))
    return hydro_residuals(snaps, model).worst()


def test_hydrodynamic_residuals_converge(acceptance):
    coarse = packet_residuals(256, 4e-3)
    fine = packet_residuals(512, 2e-3)
    ratios = {k: coarse[k] / fine[k] for k in coarse}
    still_coarse = stationary_residuals(128)
    still_fine = stationary_residuals(256)
    still_ratio = min(still_coarse[k] / still_fine[k] for k in ("momentum", "electronic"))
    ok = (min(ratios.values()) >= 3.0 and still_ratio >= 3.0
          and still_fine["continuity"] <= 1e-9)
    acceptance(9, "hydrodynamic residuals under (dr, dt) halving", ok,
               "packet ratios " + ", ".join(f"{k} {v:.2f}" for k, v in ratios.items())
               + f" (>=3); stationary O(dr^2) ratio {still_ratio:.2f}, "
               f"continuity {still_fine['continuity']:.1e}")
    assert ok


def test_koopmon_classical_limit(acceptance):
    model = LinearCrossing(1.0)
    ref = run_bomd(model, NuclearState([0.3], [0.5]), 1e-3, 10_000)
    ens = KoopmonEnsemble.adiabatic(model, [1.0], [[0.3]], [[0.5]],
                                    PhaseSpaceKernel(0.5, 0.5), 0.0)
    tr = run_koopmon_classical(ens, model, 1e-3, 10_000).trajectories[0]
    traj_err = max(np.max(np.abs(tr.q - ref.q)), np.max(np.abs(tr.p - ref.p)))

    sho = harmonic_model()
    n = 10_000
    period = run_bomd(sho, NuclearState([1.0], [0.0]), 2 * np.pi / n, n)
    delta_s = abs(kvh_phase(period).delta)

    flat = ShiftedOscillators([0.0, 0.0], [0.0, 0.0], [0.0, 0.3], couplings=0.2)
    hybrid = HybridHamiltonian(flat, kinetic=False)
    kens = KoopmonEnsemble.adiabatic(flat, [0.3, 0.7], [[0.0], [0.4]], [[0.1], [-0.2]],
                                     PhaseSpaceKernel(0.5, 0.5), 1e-3)
    iab = float(np.max(np.abs(iab_integral(kens, hybrid))))
    ok = traj_err <= 1e-12 and delta_s <= 1e-6 and iab <= 1e-12
    acceptance(10, "koopmon classical limit, KvH phase, constant-H coupling", ok,
               f"trajectory {traj_err:.1e} (<=1e-12), |dS| per period {delta_s:.1e} (<=1e-6), "
               f"max|I_ab| {iab:.1e} (<=1e-12)")
    assert ok


def test_nondimensionalization(acceptance):
    masses = (1836.15267343, 3.5 * 1836.15267343, 12.0)
    params = PhysicalParams(nuclear_masses=masses, hartree_energy=0.7, bohr_radius=1.3)
    dimless = nondimensionalize(params)
    back = np.array(dimless.mass_ratios) * dimless.mean_mass
    mass_err = float(np.max(np.abs(back - masses) / np.array(masses)))
    t = np.linspace(0.0, 50.0, 11)
    time_err = float(np.max(np.abs(dimless.to_dimensionless_time(dimless.to_physical_time(t))
                                   - t)))
    mu = nondimensionalize(PhysicalParams(nuclear_masses=(1836.0,))).mu
    mu_err = abs(mu - 1 / 1836)
    ok = mass_err <= 1e-14 and time_err <= 1e-14 and mu_err <= 1e-12
    acceptance(11, "nondimensionalization round trip and mu = 1/1836", ok,
               f"mass {mass_err:.1e}, time {time_err:.1e} (<=1e-14), mu error {mu_err:.1e} "
               "(<=1e-12)")
    assert ok


def test_tdse_reference_solver(acceptance):
    steps = 10_000
    free = ShiftedOscillators([0.0, 0.0], [0.0, 0.0], [0.0, 10.0])
    metric = MassMetric([2.0])
    grid = Grid.line(1024, -8.0, 8.0)
    psi = gaussian_packet(grid, free, 1e-3, [-1.5], [0.3], 0.15, metric=metric)
    run = run_tdse(psi, free, 1e-3, steps, record_every=100)
    norm_free = float(np.max(np.abs(run.norm - 1.0)))
    energy_free = relative_drift(run.energy)
    slope = np.polyfit(run.t, run.mean_r[:, 0], 1)[0]
    slope_err = abs(slope - run.mean_p[0, 0] / 2.0)

    model = gapped_model()
    packet = gaussian_packet(grid, model, 1e-3, [-1.5], [0.0], 0.15)
    strang = run_tdse(packet, model, 1e-3, steps, record_every=100)
    norm_coupled = float(np.max(np.abs(strang.norm - 1.0)))
    energy_strang = relative_drift(strang.energy)
    prop4 = TDSEPropagator(grid, model, 1e-3, 1e-3, order=4)
    fourth = run_tdse(packet, model, 1e-3, steps, record_every=100, propagator=prop4)
    energy_fourth = relative_drift(fourth.energy)

    norm = max(norm_free, norm_coupled)
    ok = norm <= 1e-12 and energy_free <= 1e-10 and energy_fourth <= 1e-10 and slope_err <= 1e-8
    acceptance(12, "TDSE reference solver", ok,
               f"norm drift {norm:.1e} per 1e4 steps (<=1e-12); energy drift free {energy_free:.1e}, "
               f"coupled order-4 {energy_fourth:.1e} (<=1e-10; Strang {energy_strang:.1e}); "
               f"<r> slope error {slope_err:.1e} (<=1e-8)")
    assert ok


def test_gauge_independence(acceptance, rng):
    model = gapped_model()
    grid = Grid.line(512, -4.0, 4.0)
    psi = gaussian_packet(grid, model, 1e-3, [-1.0], [0.3], 0.15)
    run = run_tdse(psi, model, 1e-3, 2, keep_snapshots=True)
    fields = [xf_extract(s) for s in run.snapshots]
    moved = [regauge(f, rng.uniform(0, 2 * np.pi, f.D.shape)) for f in fields]
    f0, f1 = fields[1], moved[1]
    m = interior(f0)
    diffs = {
        "D": np.max(np.abs(f0.D - f1.D)),
        "u": np.max(np.abs(velocity_field(f0)[m] - velocity_field(f1)[m])),
        "rho": np.max(np.abs(f0.density_matrix()[m] - f1.density_matrix()[m])),
        "eps": np.max(np.abs(electronic_potential(f0).eps_rho[m]
                             - electronic_potential(f1).eps_rho[m])),
    }
    a, b = hydro_residuals(fields, model).worst(), hydro_residuals(moved, model).worst()
    diffs["residuals"] = max(abs(a[k] - b[k]) for k in a)
    field_ok = all(np.isfinite(v) and v <= 1e-8 for v in diffs.values())

    phases = np.random.default_rng(13)

    def rephase(state):
        return state * np.exp(2j * np.pi * phases.uniform())

    state = NuclearState([-1.0], [0.4])
    plain = run_bomd(model, state, 1e-2, 500)
    gauged = run_bomd(model, state, 1e-2, 500, gauge=rephase)
    bitwise = np.array_equal(plain.q, gauged.q) and np.array_equal(plain.p, gauged.p)
    ok = field_ok and bitwise
    acceptance(13, "gauge independence", ok,
               ", ".join(f"{k} {v:.1e}" for k, v in diffs.items())
               + f" (<=1e-8); BOMD bitwise identical: {bitwise}")
    assert ok
