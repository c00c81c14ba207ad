"""Koopmons: phase-space particles carrying electronic density matrices.

Particle ``a`` sits at ``z_a = (q_a, p_a)`` with weight ``w_a`` and density
matrix ``rho_a``. With the hybrid Hamiltonian ``H(q, p) = |p|^2_{g^-1}/2 + H_e(q)``
and phase-space kernels ``K_s(z) = K(z - z_s)`` the particles couple through::

    I_ab = int K_a {K_b, H} / sum_c w_c K_c  dq dp,
    {F, H} = d_q F . d_p H - d_p F . d_q H.

The Lagrangian ``sum_a w_a (p_a . q_a' + <rho_a, i sqrt(mu) xi_a - H(z_a)
- (i sqrt(mu)/2) sum_b w_b [rho_b, I_ab]>)`` is first order, so its energy is
just the potential part::

    E = sum_a w_a <rho_a, H(z_a)> + V_c,
    V_c = (sqrt(mu)/2) sum_ab w_a w_b tr(i [rho_a, rho_b] I_ab),

and the equations of motion are::

    w_a q_a' = dE/dp_a,    w_a p_a' = -dE/dq_a,
    i sqrt(mu) rho_a' = [H(z_a) + (i sqrt(mu)/2) sum_b w_b [rho_b, I_ab - I_ba], rho_a].

The sign of the coupling generator follows from varying ``rho_a`` in ``V_c``;
the pair ``(a, b)`` contributes through both ``I_ab`` and ``I_ba``. Only the
traceless part of ``I_ab`` enters the dynamics.

A step is the palindrome ``T(dt/2) A(dt/2) X(dt) A(dt/2) T(dt/2)``: ``T`` is
the free drift, ``A`` the exact flow of ``sum_a w_a <rho_a, H_e(q_a)>`` at fixed
``q`` (as for bohmions), and ``X`` the flow of ``V_c``, taken by the implicit
midpoint rule on ``z`` with a unitary group update of ``rho`` evaluated at the
midpoint. ``X`` vanishes for a single particle and for scalar ``H_e``.

At ``mu = 0`` the coupling drops out and each particle follows Hamilton's
equations on one adiabatic surface; the electronic problem only ever sees
``q``. The Koopman-van Hove phase along such a trajectory obeys
``S' = p . d_p H_cl - H_cl``, i.e. it accumulates the classical action.
"""

from dataclasses import dataclass, field

import numpy as np

from .bomd import Trajectory
from .electronic import GAP_MIN, eigensolve
from .errors import ConvergenceError, InvalidInputError, NumericalError
from .kernels import (DENOMINATOR_FLOOR, PhaseSpaceKernel, TensorGrid, self_checked,
                      window_grid)
from .particles import (SlavedParticle, check_densities, check_weights, hermitian_exp, inner,
                        projector)
from .units import MassMetric

SPACING_FRACTION = 0.125
WINDOW = 8.0
QUADRATURE_RTOL = 1e-6
MIDPOINT_TOL = 1e-14
MIDPOINT_MAX_ITER = 50


class HybridHamiltonian:
    """``H(q, p) = |p|^2_{g^-1} / 2 Id + H_e(q)`` for an electronic model.

    With ``kinetic=False`` the momentum term is dropped, leaving ``H = H_e(q)``.
    """

    def __init__(self, model, metric=None, kinetic=True):
        self.model = model
        self.kinetic = bool(kinetic)
        self.metric = MassMetric.identity(model.nuclear_dim) if metric is None else metric
        if self.metric.dim != model.nuclear_dim:
            raise InvalidInputError("metric dimension does not match the model")

    @property
    def dim(self) -> int:
        return self.model.nuclear_dim

    @property
    def levels(self) -> int:
        return self.model.dim

    def _split(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (2 * self.dim,):
            raise InvalidInputError(f"phase-space point must have shape ({2 * self.dim},)")
        return z[: self.dim], z[self.dim:]

    def evaluate(self, z):
        q, p = self._split(z)
        kin = self.metric.kinetic(p) if self.kinetic else 0.0
        return self.model.hamiltonian(q) + kin * np.eye(self.levels)

    def poisson_gradient(self, z):
        """``(d_q H, d_p H)``, each of shape ``(dim, L, L)``."""
        q, p = self._split(z)
        eye = np.eye(self.levels, dtype=complex)
        return self.model.hamiltonian_gradient(q), self.velocity(p)[:, None, None] * eye

    def velocity(self, p):
        """``d_p H`` as a multiple of the identity: ``G^-1 p``, or zero without kinetic term."""
        p = np.asarray(p, dtype=float)
        return p / self.metric.masses if self.kinetic else np.zeros_like(p)


@dataclass(frozen=True)
class KoopmonEnsemble:
    weights: np.ndarray
    q: np.ndarray
    p: np.ndarray
    rho: np.ndarray
    kernel: PhaseSpaceKernel
    mu: float
    metric: MassMetric = None
    t: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        q = q.copy()
        p = np.asarray(self.p, dtype=float).reshape(q.shape).copy()
        count, dim = q.shape
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise InvalidInputError("particle coordinates must be finite")
        if self.kernel.dim != dim:
            raise InvalidInputError("kernel dimension does not match the configuration")
        if not (np.isfinite(self.mu) and self.mu >= 0):
            raise InvalidInputError("mu must be non-negative")
        metric = MassMetric.identity(dim) if self.metric is None else self.metric
        if metric.dim != dim:
            raise InvalidInputError("metric dimension does not match the configuration")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "weights", check_weights(self.weights, count))
        object.__setattr__(self, "rho", check_densities(self.rho, count))
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "mu", float(self.mu))

    @classmethod
    def adiabatic(cls, model, weights, q, p, kernel, mu, metric=None, level=0):
        q = np.asarray(q, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        rho = np.array([projector(eigensolve(model.hamiltonian(qa)).states[:, level]) for qa in q])
        return cls(weights, q, p, rho, kernel, mu, metric)

    @property
    def size(self) -> int:
        return self.q.shape[0]

    @property
    def dim(self) -> int:
        return self.q.shape[1]

    @property
    def z(self):
        return np.concatenate([self.q, self.p], axis=1)

    def traces(self):
        return np.real(np.trace(self.rho, axis1=1, axis2=2))

    def purities(self):
        return np.array([inner(r, r) for r in self.rho])


def _replace(ens, **changes):
    new = object.__new__(KoopmonEnsemble)
    for name in ("weights", "q", "p", "rho", "kernel", "mu", "metric", "t"):
        object.__setattr__(new, name, changes.get(name, getattr(ens, name)))
    return new


def _split_grid(grid, dim):
    return TensorGrid(grid.axes[:dim]), TensorGrid(grid.axes[dim:])


def _iab_terms(grid, z, weights, kernel, hybrid, gradient):
    d = hybrid.dim
    levels = hybrid.levels
    grid_r, grid_p = _split_grid(grid, d)
    r, pp = grid_r.points, grid_p.points
    quad = np.multiply.outer(grid_r.weights, grid_p.weights)
    nr, np_ = r.shape[0], pp.shape[0]
    pts = np.concatenate([np.broadcast_to(r[:, None, :], (nr, np_, d)),
                          np.broadcast_to(pp[None, :, :], (nr, np_, d))], axis=-1)
    x = pts[None] - z[:, None, None, :]
    k = kernel.evaluate(x)
    gk = kernel.gradient(x)
    den = np.maximum(np.einsum("a,arp->rp", weights, k), DENOMINATOR_FLOOR)
    hq = np.array([hybrid.model.hamiltonian_gradient(ri) for ri in r])  # (nr, d, L, L)
    vp = hybrid.velocity(pp)  # (np, d)
    eye = np.eye(levels, dtype=complex)

    def assemble(scalar, coeff):
        # scalar * Id - sum_{j,r} coeff[..., j, r] dH/dq_j(r)
        return scalar[..., None, None] * eye - np.einsum("...jr,rjkl->...kl", coeff, hq)

    kd = k * (quad / den)  # K_a w(z) / D
    bracket_q = np.einsum("brpj,pj->brp", gk[..., :d], vp)  # d_q K_b . d_p H (scalar part)
    s = np.einsum("arp,brp->ab", kd, bracket_q)
    y = np.einsum("arp,brpj->abjr", kd, gk[..., d:])
    iab = assemble(s, y)
    if not gradient:
        return iab
    count, nz = z.shape
    dI = np.zeros((count, count, count, nz, levels, levels), dtype=complex)
    # e = a: d/dz_a K_a = -grad K_a
    f1 = -gk * (quad / den)[None, ..., None]  # (a, r, p, k)
    s1 = np.einsum("arpk,brp->abk", f1, bracket_q)
    y1 = np.einsum("arpk,brpj->abkjr", f1, gk[..., d:])
    t1 = assemble(s1, y1)
    for a in range(count):
        dI[a, :, a] += t1[a]
    # e = b: {-d_k K_b, H}
    hess = kernel.hessian(x)  # (b, r, p, k, m)
    s2 = -np.einsum("arp,brpkj,pj->abk", kd, hess[..., :d], vp, optimize=True)
    y2 = -np.einsum("arp,brpkj->abkjr", kd, hess[..., d:])
    t2 = assemble(s2, y2)
    for b in range(count):
        dI[:, b, b] += t2[:, b]
    # every e: d(1/D)/dz_e = w_e grad K_e / D^2
    ge = gk * (weights[:, None, None, None] / den[None, ..., None])  # (e, r, p, k)
    s3 = np.einsum("arp,erpk,brp->abek", kd, ge, bracket_q, optimize=True)
    y3 = np.einsum("arp,erpk,brpj->abekjr", kd, ge, gk[..., d:], optimize=True)
    dI += assemble(s3, y3)
    return iab, dI


def _grid_for(ens):
    return window_grid(ens.z, ens.kernel.widths, SPACING_FRACTION, WINDOW)


def _iab(ensemble, hybrid, gradient, check):
    if hybrid.dim != ensemble.dim:
        raise InvalidInputError("hybrid Hamiltonian and ensemble dimensions differ")
    args = (ensemble.z, ensemble.weights, ensemble.kernel, hybrid, gradient)
    fn = lambda g: _iab_terms(g, *args)  # noqa: E731
    grid = _grid_for(ensemble)
    if not check:
        return fn(grid)
    # judge against the size of the integrand, since I_ab may vanish identically
    hscale = max(np.max(np.abs(hybrid.model.hamiltonian_gradient(q))) for q in ensemble.q)
    vscale = np.max(np.abs(hybrid.velocity(ensemble.p)), initial=0.0)
    base = (hscale / ensemble.kernel.alpha_p + vscale / ensemble.kernel.alpha_q)
    minw = float(np.min(ensemble.weights))
    wmin = min(ensemble.kernel.alpha_q, ensemble.kernel.alpha_p)
    if gradient:
        scales = lambda i, di: (base / minw, base / (minw * wmin))  # noqa: E731
    else:
        scales = lambda i: (base / minw,)  # noqa: E731
    return self_checked(fn, grid, QUADRATURE_RTOL, "coupling integrals", scales)


def iab_integral(ensemble: KoopmonEnsemble, hybrid: HybridHamiltonian, check=True):
    """Coupling integrals ``I_ab``, shape ``(P, P, L, L)``; each ``I_ab`` is Hermitian.

    Tensor trapezoid quadrature over phase space with spacing ``alpha/8`` per
    axis on a window ``8 alpha`` past the outermost particles, verified against
    half the spacing when ``check`` is set.
    """
    iab = _iab(ensemble, hybrid, False, check)
    return 0.5 * (iab + np.conj(np.swapaxes(iab, -1, -2)))


def iab_gradient(ensemble: KoopmonEnsemble, hybrid: HybridHamiltonian, check=True):
    """``I_ab`` and ``dI_ab/dz_e`` (shape ``(P, P, P, 2 dim, L, L)``, indexed ``[a, b, e, k]``)."""
    return _iab(ensemble, hybrid, True, check)


def _commutators(rho):
    # i [rho_a, rho_b]
    prod = np.einsum("aij,bjk->abik", rho, rho)
    return 1j * (prod - np.swapaxes(prod, 0, 1))


def coupling_energy(ensemble, iab):
    """``V_c = (sqrt(mu)/2) sum_ab w_a w_b tr(i [rho_a, rho_b] I_ab)``."""
    w = ensemble.weights
    m = _commutators(ensemble.rho)
    tr = np.real(np.einsum("abij,abji->ab", m, iab))
    return 0.5 * np.sqrt(ensemble.mu) * float(w @ tr @ w)


def koopmon_energy(ensemble: KoopmonEnsemble, hybrid: HybridHamiltonian, iab=None) -> float:
    """Conserved energy ``sum_a w_a <rho_a, H(z_a)> + V_c``."""
    total = 0.0
    for a in range(ensemble.size):
        total += ensemble.weights[a] * inner(ensemble.rho[a], hybrid.evaluate(ensemble.z[a]))
    if ensemble.mu > 0 and ensemble.size > 1:
        iab = iab_integral(ensemble, hybrid) if iab is None else iab
        total += coupling_energy(ensemble, iab)
    return total


def coupling_generators(ensemble, iab):
    """Anti-Hermitian ``Xi_a = (1/2) sum_b w_b [rho_b, I_ab - I_ba]`` with ``rho_a' = [Xi_a, rho_a]``."""
    w = ensemble.weights
    j = iab - np.swapaxes(iab, 0, 1)
    rb = ensemble.rho
    comm = np.einsum("bij,abjk->abik", rb, j) - np.einsum("abij,bjk->abik", j, rb)
    return 0.5 * np.einsum("b,abik->aik", w, comm)


def _coupling_vector_field(ens, hybrid, check):
    """Time derivatives of ``(q, p)`` and the ``rho`` generators under ``V_c`` alone."""
    iab, dI = iab_gradient(ens, hybrid, check)
    w = ens.weights
    m = _commutators(ens.rho)
    # dV_c/dz_e = (sqrt(mu)/2) sum_ab w_a w_b tr(i[rho_a, rho_b] dI_ab/dz_e)
    dv = 0.5 * np.sqrt(ens.mu) * np.real(np.einsum("a,b,abij,abekji->ek", w, w, m, dI))
    d = ens.dim
    qdot = dv[:, d:] / w[:, None]
    pdot = -dv[:, :d] / w[:, None]
    return qdot, pdot, coupling_generators(ens, iab)


def _coupling_flow(ens, hybrid, dt, check):
    """Implicit-midpoint step of the ``V_c`` flow with a unitary density update."""
    q0, p0, rho0 = ens.q, ens.p, ens.rho
    q1, p1, rho1 = q0, p0, rho0
    for it in range(MIDPOINT_MAX_ITER):
        mid = _replace(ens, q=0.5 * (q0 + q1), p=0.5 * (p0 + p1), rho=0.5 * (rho0 + rho1))
        qdot, pdot, xi = _coupling_vector_field(mid, hybrid, check and it == 0)
        q_new = q0 + dt * qdot
        p_new = p0 + dt * pdot
        rho_new = np.empty_like(rho0)
        for a in range(ens.size):
            # exp(dt Xi) = exp(-i dt (i Xi)) with i Xi Hermitian
            u = hermitian_exp(1j * xi[a], dt)
            r = u @ rho0[a] @ u.conj().T
            rho_new[a] = 0.5 * (r + r.conj().T)
        change = max(np.max(np.abs(q_new - q1)), np.max(np.abs(p_new - p1)),
                     np.max(np.abs(rho_new - rho1)))
        scale = 1.0 + max(np.max(np.abs(q_new)), np.max(np.abs(p_new)))
        q1, p1, rho1 = q_new, p_new, rho_new
        if change <= MIDPOINT_TOL * scale and it > 0:
            return _replace(ens, q=q1, p=p1, rho=rho1)
    raise ConvergenceError(f"implicit midpoint did not converge (last change {change:.3e})",
                           residual=change)


def _electronic_flow(ens, model, tau):
    """Exact flow of ``sum_a w_a <rho_a, H_e(q_a)>`` at fixed ``q``."""
    hbar = np.sqrt(ens.mu)
    p = ens.p.copy()
    rho = ens.rho.copy()
    for a in range(ens.size):
        sol = eigensolve(model.hamiltonian(ens.q[a]))
        v, e = sol.states, sol.energies
        gt = np.einsum("ki,nkl,lj->nij", v.conj(), model.hamiltonian_gradient(ens.q[a]), v)
        rt = v.conj().T @ rho[a] @ v
        omega = (e[:, None] - e[None, :]) / hbar
        f = tau * np.exp(-0.5j * omega * tau) * np.sinc(omega * tau / (2 * np.pi))
        p[a] -= np.real(np.einsum("jk,nkj->n", rt * f, gt))
        r = v @ (rt * np.exp(-1j * omega * tau)) @ v.conj().T
        rho[a] = 0.5 * (r + r.conj().T)
    return _replace(ens, p=p, rho=rho)


def _drift(ens, tau):
    return _replace(ens, q=ens.q + tau * ens.p / ens.metric.masses)


def koopmon_step(ensemble: KoopmonEnsemble, hybrid: HybridHamiltonian, dt, check=False):
    """One symmetric step of the finite-``mu`` koopmon dynamics (see module docstring)."""
    if not ensemble.mu > 0:
        raise InvalidInputError("the finite-mu stepper requires mu > 0")
    if not dt > 0 and not dt < 0:
        raise InvalidInputError("dt must be non-zero")
    model = hybrid.model
    ens = _drift(ensemble, 0.5 * dt)
    ens = _electronic_flow(ens, model, 0.5 * dt)
    if ens.size > 1:
        ens = _coupling_flow(ens, hybrid, dt, check)
    ens = _electronic_flow(ens, model, 0.5 * dt)
    ens = _drift(ens, 0.5 * dt)
    if not (np.all(np.isfinite(ens.p)) and np.all(np.isfinite(ens.rho))):
        raise NumericalError("non-finite state in koopmon step")
    return _replace(ens, t=ensemble.t + dt)


@dataclass
class KoopmonRun:
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    trace_error: np.ndarray
    weights: np.ndarray
    final: KoopmonEnsemble = field(repr=False, default=None)


def run_koopmon(ensemble: KoopmonEnsemble, hybrid: HybridHamiltonian, dt, n_steps, record_every=1,
                check=True):
    if int(n_steps) != n_steps or n_steps < 0 or record_every < 1:
        raise InvalidInputError("n_steps must be a non-negative integer and record_every >= 1")
    rows = {k: [] for k in ("t", "q", "p", "energy", "trace_error")}

    def record(ens):
        rows["t"].append(ens.t)
        rows["q"].append(ens.q.copy())
        rows["p"].append(ens.p.copy())
        rows["energy"].append(koopmon_energy(ens, hybrid))
        rows["trace_error"].append(float(np.max(np.abs(ens.traces() - 1.0))))

    ens = ensemble
    if check and ens.size > 1:
        iab_gradient(ens, hybrid, check=True)
    record(ens)
    for n in range(1, int(n_steps) + 1):
        ens = koopmon_step(ens, hybrid, dt)
        if n % record_every == 0:
            record(ens)
    arr = {k: np.array(v) for k, v in rows.items()}
    return KoopmonRun(weights=ens.weights, final=ens, **arr)


@dataclass
class ClassicalKoopmonRun:
    trajectories: list
    weights: np.ndarray

    @property
    def t(self):
        return self.trajectories[0].t

    def mean_q(self):
        return sum(w * tr.q for w, tr in zip(self.weights, self.trajectories))

    def mean_p(self):
        return sum(w * tr.p for w, tr in zip(self.weights, self.trajectories))


def run_koopmon_classical(ensemble: KoopmonEnsemble, model, dt, n_steps, record_every=1,
                          gap_min=GAP_MIN) -> ClassicalKoopmonRun:
    """``mu = 0`` koopmons: canonical flow ``q' = G^-1 p``, ``p' = -grad <rho_a, H_e(q_a)>``.

    Each ``rho_a`` must commute with ``H_e(q_a)``; its eigen-populations are
    carried adiabatically. The electronic stage receives configurations only,
    never momenta.
    """
    trajectories = []
    for a in range(ensemble.size):
        particle = SlavedParticle(model, ensemble.q[a], ensemble.p[a], ensemble.rho[a],
                                  ensemble.metric, ensemble.t, gap_min)
        trajectories.append(particle.run(dt, n_steps, record_every))
    return ClassicalKoopmonRun(trajectories, ensemble.weights)


@dataclass
class ClassicalPhaseRecord:
    """Samples ``(t, q, p, S)`` of a classical trajectory with its Koopman-van Hove phase."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    S: np.ndarray

    @property
    def delta(self) -> float:
        return float(self.S[-1] - self.S[0])


def kvh_phase(traj: Trajectory, model=None, s0=0.0) -> ClassicalPhaseRecord:
    """Accumulate ``S' = p . d_p H_cl - H_cl = |p|^2_{g^-1}/2 - E(q)`` along ``traj``.

    The trapezoid rule on the recorded samples matches the second order of
    the integrator. ``traj.energy`` must hold the surface energy ``E(q)``; when
    ``model`` is given the ground surface is re-evaluated instead.

    Examples
    --------
    A free particle ``E = 0`` with momentum ``k`` and unit mass gains
    ``S = k^2 t / 2``.
    """
    metric = traj.metric if traj.metric is not None else MassMetric.identity(traj.q.shape[1])
    kin = 0.5 * np.sum(traj.p ** 2 / metric.masses, axis=1)
    if model is None:
        pot = np.asarray(traj.energy, dtype=float)
    else:
        pot = np.array([eigensolve(model.hamiltonian(q)).energies[0] for q in traj.q])
    lag = kin - pot
    steps = np.diff(traj.t)
    s = np.concatenate([[0.0], np.cumsum(0.5 * steps * (lag[1:] + lag[:-1]))]) + s0
    if not np.all(np.isfinite(s)):
        raise NumericalError("non-finite phase")
    return ClassicalPhaseRecord(t=np.asarray(traj.t), q=np.asarray(traj.q), p=np.asarray(traj.p), S=s)
