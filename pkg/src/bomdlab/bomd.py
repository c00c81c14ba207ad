"""On-the-fly Born-Oppenheimer molecular dynamics.

Nuclei follow Newton's equations ``G q'' = -grad E(q)`` on one adiabatic
surface; the electronic eigenproblem is re-solved at every force evaluation.
Time stepping is velocity Verlet (kick-drift-kick, one force call per step).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .electronic import GAP_MIN, AdiabaticTracker, adiabatic_continuation, eigensolve
from .errors import CausticError, InvalidInputError, NumericalError
from .units import MassMetric


@dataclass(frozen=True)
class NuclearState:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0
    metric: MassMetric = None

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        if q.shape != p.shape or q.ndim != 1:
            raise InvalidInputError("q and p must be vectors of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.isfinite(self.t)):
            raise InvalidInputError("nuclear state has non-finite entries")
        metric = self.metric if self.metric is not None else MassMetric.identity(q.size)
        if metric.dim != q.size:
            raise InvalidInputError("metric dimension does not match the configuration")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "metric", metric)

    @property
    def velocity(self):
        return self.metric.raise_(self.p)

    def kinetic(self) -> float:
        return self.metric.kinetic(self.p)


@dataclass
class Trajectory:
    """Uniformly sampled nuclear trajectory on one adiabatic surface."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    gap: np.ndarray
    total: np.ndarray
    metric: MassMetric = field(default=None, repr=False)

    @property
    def columns(self):
        names = ["t"]
        names += [f"q{j}" for j in range(self.q.shape[1])]
        names += [f"p{j}" for j in range(self.p.shape[1])]
        names += ["E0", "gap", "H"]
        return names

    def table(self):
        return np.column_stack([self.t, self.q, self.p, self.energy, self.gap, self.total])

    def __len__(self):
        return self.t.size


class _Recorder:
    def __init__(self, metric):
        self.metric = metric
        self.rows = {k: [] for k in ("t", "q", "p", "energy", "gap", "total")}

    def add(self, t, q, p, energy, gap):
        r = self.rows
        r["t"].append(t)
        r["q"].append(q.copy())
        r["p"].append(p.copy())
        r["energy"].append(energy)
        r["gap"].append(gap)
        r["total"].append(self.metric.kinetic(p) + energy)

    def trajectory(self):
        r = self.rows
        nd = self.metric.dim
        return Trajectory(
            t=np.asarray(r["t"], dtype=float),
            q=np.asarray(r["q"], dtype=float).reshape(-1, nd),
            p=np.asarray(r["p"], dtype=float).reshape(-1, nd),
            energy=np.asarray(r["energy"], dtype=float),
            gap=np.asarray(r["gap"], dtype=float),
            total=np.asarray(r["total"], dtype=float),
            metric=self.metric,
        )


def _kdk(q, p, f, force_fn, dt, minv):
    p_half = p + 0.5 * dt * f
    q_new = q + dt * (minv * p_half)
    f_new = force_fn(q_new)
    p_new = p_half + 0.5 * dt * f_new
    return q_new, p_new, f_new


def verlet_step(state: NuclearState, force_fn, dt: float, force=None) -> NuclearState:
    """One velocity-Verlet step of ``q' = G^-1 p``, ``p' = force_fn(q)``.

    ``force`` may pass the force already known at ``state.q``; otherwise it is
    evaluated. Negative ``dt`` runs the (exactly reversible) step backwards.
    """
    if dt == 0 or not np.isfinite(dt):
        raise InvalidInputError("dt must be finite and non-zero")
    f = force_fn(state.q) if force is None else np.asarray(force, dtype=float)
    minv = 1.0 / state.metric.masses
    q, p, _ = _kdk(state.q, state.p, f, force_fn, dt, minv)
    return replace(state, q=q, p=p, t=state.t + dt)


def run_bomd(model, state0: NuclearState, dt, n_steps, record_every=1, level=0,
             electronic_state=None, gap_min=GAP_MIN, warm_start=True, gauge=None):
    """Integrate BOMD on the adiabatic surface ``level`` (0 = ground).

    Parameters
    ----------
    model : ElectronicModel
    state0 : NuclearState
    dt : float
    n_steps : int
    record_every : int
        Sampling stride; step 0 and every ``record_every``-th step are stored.
    electronic_state : array_like, optional
        Initial electronic vector to track instead of eigenvector ``level``.
    gauge : callable, optional
        Applied to the tracked electronic vector after every step (for example a
        random re-phasing). It can only change phases the dynamics ignore.

    Raises
    ------
    NearDegeneracyError, StateTrackingError
        With ``partial`` set to the trajectory up to the failure.
    """
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    if n_steps < 0 or record_every < 1:
        raise InvalidInputError("n_steps must be >= 0 and record_every >= 1")
    metric = state0.metric
    minv = 1.0 / metric.masses
    tracker = AdiabaticTracker(model, state0.q, level=level, state=electronic_state,
                               gap_min=gap_min, warm_start=warm_start)
    rec = _Recorder(metric)
    last = {}

    def force_fn(q):
        point = tracker.evaluate(q)
        if gauge is not None:
            tracker.state = gauge(tracker.state)
        last["point"] = point
        return point.force

    q, p, t = state0.q.copy(), state0.p.copy(), state0.t
    try:
        f = force_fn(q)
        rec.add(t, q, p, last["point"].energy, last["point"].gap)
        for n in range(1, n_steps + 1):
            q, p, f = _kdk(q, p, f, force_fn, dt, minv)
            t = state0.t + n * dt
            if n % record_every == 0:
                rec.add(t, q, p, last["point"].energy, last["point"].gap)
    except NumericalError as exc:
        exc.partial = rec.trajectory()
        raise
    traj = rec.trajectory()
    traj.final_state = NuclearState(q=q, p=p, t=t, metric=metric)
    traj.final_electronic = tracker.state.copy()
    return traj


def surface_force(model, level=0, gap_min=GAP_MIN):
    """Stateful ``q -> force`` closure on one tracked surface (for ``verlet_step``)."""
    tracker = None

    def force(q):
        nonlocal tracker
        if tracker is None:
            tracker = AdiabaticTracker(model, q, level=level, gap_min=gap_min)
        return tracker.evaluate(q).force

    return force


def _surface_hessian(model, q, phi, h=1e-4):
    """Hessian of the tracked surface by central differences of the force."""
    nd = q.size
    hess = np.zeros((nd, nd))
    for j in range(nd):
        e = np.zeros(nd)
        e[j] = h
        fs = []
        for sign in (1.0, -1.0):
            qq = q + sign * e
            sol = eigensolve(model.hamiltonian(qq))
            k, _, _ = adiabatic_continuation(phi, sol)
            vec = sol.states[:, k]
            grad = model.hamiltonian_gradient(qq)
            fs.append(np.real(np.einsum("i,jik,k->j", vec.conj(), grad, vec)))
        hess[:, j] = (fs[0] - fs[1]) / (2 * h)
    return 0.5 * (hess + hess.T)


@dataclass
class CharacteristicReport:
    t: np.ndarray
    q: np.ndarray
    sigma: np.ndarray
    action: np.ndarray
    jacobian: np.ndarray
    max_momentum_deviation: float
    max_action_deviation: float = None


def hj_characteristic_check(model, q0, grad_s0, dt, n_steps, metric=None, hess_s0=None,
                            s0=0.0, level=0, free_particle=False, jacobian_floor=1e-8):
    """Solve the Hamilton-Jacobi equation on one surface by characteristics.

    Integrates ``q' = G^-1 sigma``, ``sigma' = -grad E`` from ``sigma(0) =
    grad S0(q0)`` together with the variational (Jacobian) system of the
    characteristic map. Independently, ``grad S`` is transported along the
    resulting path by integrating ``d(grad S)/dt = -grad E`` and compared with
    ``G q'`` taken from central differences of the path.

    The action along the path accumulates ``dS/dt = ||sigma||^2/2 - E``. With
    ``free_particle=True`` (``E = 0``, linear ``S0 = k.q``) it is also checked
    against ``S(q, t) = k.q - ||k||^2_{g^-1} t / 2``.

    Raises
    ------
    CausticError
        When ``det(dq/dq0)`` falls below ``jacobian_floor`` or changes sign.
    """
    q = np.atleast_1d(np.asarray(q0, dtype=float)).copy()
    sigma = np.atleast_1d(np.asarray(grad_s0, dtype=float)).copy()
    nd = q.size
    metric = metric if metric is not None else MassMetric.identity(nd)
    minv = 1.0 / metric.masses
    jac = np.eye(nd)
    kmat = np.zeros((nd, nd)) if hess_s0 is None else np.asarray(hess_s0, dtype=float).reshape(nd, nd)
    tracker = AdiabaticTracker(model, q, level=level)

    def surface(qq):
        point = tracker.evaluate(qq)
        return point.force, point.energy, _surface_hessian(model, qq, tracker.state)

    f, energy, hess = surface(q)
    ts, qs, sigmas, forces, lag, dets = [0.0], [q.copy()], [sigma.copy()], [f.copy()], [], [1.0]
    lag.append(metric.kinetic(sigma) - energy)

    def report():
        return CharacteristicReport(
            t=np.array(ts), q=np.array(qs), sigma=np.array(sigmas),
            action=s0 + np.concatenate([[0.0], np.cumsum(0.5 * dt * (np.array(lag[1:]) + np.array(lag[:-1])))]),
            jacobian=np.array(dets), max_momentum_deviation=np.nan,
        )

    for n in range(1, n_steps + 1):
        sigma_half = sigma + 0.5 * dt * f
        k_half = kmat - 0.5 * dt * hess @ jac
        q = q + dt * minv * sigma_half
        jac = jac + dt * minv[:, None] * k_half
        f, energy, hess = surface(q)
        sigma = sigma_half + 0.5 * dt * f
        kmat = k_half - 0.5 * dt * hess @ jac
        det = float(np.linalg.det(jac))
        t = n * dt
        ts.append(t)
        qs.append(q.copy())
        sigmas.append(sigma.copy())
        forces.append(f.copy())
        lag.append(metric.kinetic(sigma) - energy)
        dets.append(det)
        if abs(det) < jacobian_floor or np.sign(det) != np.sign(dets[-2]):
            prev = dets[-2]
            t_c = t - dt * det / (det - prev) if det != prev else t
            raise CausticError(f"caustic: characteristic Jacobian vanishes near t={t_c:.6g}",
                               time=t_c, partial=report())

    rep = report()
    qs_arr, forces_arr = rep.q, np.array(forces)
    transported = rep.sigma[0] + np.concatenate(
        [np.zeros((1, nd)), np.cumsum(0.5 * dt * (forces_arr[1:] + forces_arr[:-1]), axis=0)]
    )
    if n_steps >= 2:
        qdot = (qs_arr[2:] - qs_arr[:-2]) / (2 * dt)
        dev = np.linalg.norm(transported[1:-1] - metric.masses * qdot, axis=1)
        rep.max_momentum_deviation = float(np.max(dev))
    else:
        rep.max_momentum_deviation = 0.0
    if free_particle:
        k = rep.sigma[0]
        exact = qs_arr @ k - metric.kinetic(k) * rep.t
        rep.max_action_deviation = float(np.max(np.abs(rep.action - exact)))
    return rep


@dataclass
class ClosureReport:
    max_residual: float
    sample_spacing: float
    residuals: np.ndarray


def delta_closure_consistency(model, state0: NuclearState, dt, n_steps, stride=10, level=0):
    """Check ``G q'' = -grad E(q)`` on a BOMD trajectory sampled every ``stride`` steps.

    The acceleration comes from second differences of the stored
    configurations, so the residual measures an ``O((stride*dt)^2)``
    discretization of the point-particle closure.
    """
    traj = run_bomd(model, state0, dt, n_steps, record_every=stride, level=level)
    h = stride * dt
    metric = state0.metric
    if len(traj) < 3:
        return ClosureReport(max_residual=0.0, sample_spacing=h, residuals=np.zeros(0))
    tracker = AdiabaticTracker(model, traj.q[1], level=level)
    accel = (traj.q[2:] - 2 * traj.q[1:-1] + traj.q[:-2]) / h ** 2
    residuals = np.empty(len(traj) - 2)
    for i, qi in enumerate(traj.q[1:-1]):
        force = tracker.evaluate(qi).force
        residuals[i] = np.linalg.norm(metric.masses * accel[i] - force)
    return ClosureReport(max_residual=float(np.max(residuals)), sample_spacing=h, residuals=residuals)
