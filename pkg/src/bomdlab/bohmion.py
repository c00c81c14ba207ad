"""Bohmions: weighted computational particles carrying electronic density matrices.

Particle ``a`` has weight ``w_a``, configuration ``q_a``, momentum covector
``p_a`` and density matrix ``rho_a``. The particles interact only through the
kernel integrals::

    C_ab = int g^-1(grad K(r - q_a), grad K(r - q_b)) / sum_c w_c K(r - q_c) dr

The Lagrangian is ``L = sum_a w_a (|q_a'|_g^2 / 2 + <rho_a, i sqrt(mu) xi_a - H_a>)
+ (mu/8) sum_ab w_a w_b (1 - 2 <rho_a, rho_b>) C_ab`` with ``H_a = H_e(q_a)``
and ``rho_a' = [xi_a, rho_a]``. Its Legendre transform is the conserved energy
``E = sum_a w_a |p_a|^2_{g^-1} / 2 + V`` with potential::

    V = sum_a w_a <rho_a, H_a> + (mu/8) sum_ab w_a w_b (2 <rho_a, rho_b> - 1) C_ab

and Hamilton's principle gives, with ``p_a = G q_a'``::

    w_a p_a'           = -dV/dq_a
    i sqrt(mu) rho_a'  = [H_a + (mu/2) sum_b w_b C_ab rho_b, rho_a]

For a single pure particle the kernel term is ``+mu / (8 G alpha^2)``, the
Fisher-information energy of a Gaussian of width ``alpha``.

Time stepping splits ``V`` into pieces whose flows are exact at fixed ``q``:

* ``A``: each ``rho_a`` rotates under ``H_a`` alone while ``p_a`` collects the
  exact time integral of ``-<rho_a(t), grad H_a>``, plus the ``rho``-independent
  part of the kernel energy (it depends on ``rho`` only through the conserved
  purities ``<rho_b, rho_b>``);
* ``B_bc`` for each pair ``b < c``: the pair term
  ``(mu/2) w_b w_c <rho_b, rho_c> C_bc``. Both densities rotate by the same
  unitary ``exp(-i (sqrt(mu)/2) C_bc t (w_b rho_b + w_c rho_c))``, which keeps
  ``<rho_b, rho_c>`` fixed, so the momentum kick is exact;
* ``T``: the free drift ``q_a += t G^-1 p_a``.

A step is the palindrome ``S(dt/2) T(dt) S(dt/2)`` with
``S(t) = A(t/2) B_1(t/2) ... B_K(t) ... B_1(t/2) A(t/2)``. Every sub-flow is
symplectic on the nuclear variables and a unitary conjugation on the densities,
and the composition is symmetric, so the scheme is time-reversible, preserves
traces and spectra of every ``rho_a`` to round-off, and has bounded energy error.

At ``mu = 0`` the particles decouple; each follows one adiabatic surface and the
dynamics is plain Born-Oppenheimer MD.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .electronic import GAP_MIN, eigensolve
from .errors import InvalidInputError, NumericalError
from .kernels import DENOMINATOR_FLOOR, GaussianKernel, self_checked, window_grid
from .particles import (SlavedParticle, check_densities, check_weights, conjugate,
                        hermitian_exp, inner, projector)
from .units import MassMetric

SPACING_FRACTION = 0.125
WINDOW = 8.0
QUADRATURE_RTOL = 1e-6


@dataclass(frozen=True)
class BohmionEnsemble:
    weights: np.ndarray
    q: np.ndarray
    p: np.ndarray
    rho: np.ndarray
    kernel: GaussianKernel
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
            raise InvalidInputError(f"kernel dimension {self.kernel.dim} != configuration dimension {dim}")
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
        """Ensemble whose densities project onto eigenstate ``level`` at each ``q_a``."""
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

    def traces(self):
        return np.real(np.trace(self.rho, axis1=1, axis2=2))

    def purities(self):
        return np.array([inner(r, r) for r in self.rho])

    def mean_q(self):
        return self.weights @ self.q

    def mean_p(self):
        return self.weights @ self.p


def _coupling_terms(grid, q, weights, kernel, metric, gradient):
    pts, quad = grid.points, grid.weights
    x = pts[None, :, :] - q[:, None, :]
    k = kernel.evaluate(x)
    gk = kernel.gradient(x)
    den = np.maximum(weights @ k, DENOMINATOR_FLOOR)
    gk_up = gk / metric.masses
    c = np.einsum("and,bnd,n->ab", gk_up, gk, quad / den)
    c = 0.5 * (c + c.T)
    if not gradient:
        return c
    count, dim = q.shape
    dc = np.zeros((count, count, count, dim))
    # ratios are formed separately so that den**2 never underflows
    gk_rel = gk / den[None, :, None]
    for a in range(count):
        # d/dq_a grad K(r - q_a) = -Hess K(r - q_a)
        hv = kernel.hessian_dot(np.broadcast_to(x[a], gk_up.shape), gk_up)
        t1 = -np.einsum("bnj,n->bj", hv, quad / den)
        dc[a, :, a, :] += t1
        dc[:, a, a, :] += t1
        # d(1/den)/dq_e = w_e grad K_e / den^2
        n_ab = np.einsum("nd,bnd->bn", gk_up[a], gk) / den
        dc[a] += np.einsum("bn,enj,n->bej", n_ab, gk_rel, quad) * weights[None, :, None]
    return c, dc


def _grid_for(ens):
    return window_grid(ens.q, ens.kernel.alpha, SPACING_FRACTION, WINDOW)


def coupling_matrix(ensemble: BohmionEnsemble, check=True):
    """Symmetric ``P x P`` kernel coupling matrix ``C``.

    Trapezoid quadrature with spacing ``alpha/8`` on a window extending
    ``6 alpha`` past the outermost particles. With ``check`` the result is
    compared against a grid of half the spacing and a
    :class:`~bomdlab.errors.QuadratureError` is raised when they differ by more
    than ``1e-6`` relative.

    >>> ens = BohmionEnsemble([1.0], [[0.0]], [[0.0]], [[[1, 0], [0, 0]]], GaussianKernel(0.5), 0.0)
    >>> round(float(coupling_matrix(ens)[0, 0]), 10)
    4.0
    """
    args = (ensemble.q, ensemble.weights, ensemble.kernel, ensemble.metric, False)
    fn = lambda g: _coupling_terms(g, *args)  # noqa: E731
    grid = _grid_for(ensemble)
    if check:
        return self_checked(fn, grid, QUADRATURE_RTOL, "coupling matrix")
    return fn(grid)


def coupling_matrix_gradient(ensemble: BohmionEnsemble, check=True):
    """``dC_ab / dq_e`` as an array of shape ``(P, P, P, dim)`` indexed ``[a, b, e, j]``."""
    return coupling_with_gradient(ensemble, check)[1]


def coupling_with_gradient(ensemble: BohmionEnsemble, check=True):
    args = (ensemble.q, ensemble.weights, ensemble.kernel, ensemble.metric, True)
    fn = lambda g: _coupling_terms(g, *args)  # noqa: E731
    grid = _grid_for(ensemble)
    if check:
        # the gradient is judged against the natural scale max|C| / alpha
        alpha = ensemble.kernel.alpha
        scales = lambda c, dc: (np.max(np.abs(c)), np.max(np.abs(c)) / alpha)  # noqa: E731
        return self_checked(fn, grid, QUADRATURE_RTOL, "coupling matrix", scales)
    return fn(grid)


def kernel_energy(ensemble, c):
    """``(mu/8) sum_ab w_a w_b (2 <rho_a, rho_b> - 1) C_ab``."""
    w = ensemble.weights
    overlaps = np.einsum("aij,bij->ab", ensemble.rho.conj(), ensemble.rho).real
    return 0.125 * ensemble.mu * float(w @ ((2.0 * overlaps - 1.0) * c) @ w)


def bohmion_energy(ensemble: BohmionEnsemble, model, coupling=None) -> float:
    """Conserved energy of the bohmion dynamics.

    ``sum_a w_a (|p_a|^2_{g^-1}/2 + <rho_a, H_e(q_a)>)`` plus the kernel energy
    ``(mu/8) sum_ab w_a w_b (2 <rho_a, rho_b> - 1) C_ab``. ``coupling`` may pass
    a precomputed ``C``.
    """
    total = 0.0
    for a in range(ensemble.size):
        h = model.hamiltonian(ensemble.q[a])
        total += ensemble.weights[a] * (ensemble.metric.kinetic(ensemble.p[a])
                                        + inner(ensemble.rho[a], h))
    if ensemble.mu > 0:
        c = coupling_matrix(ensemble) if coupling is None else coupling
        total += kernel_energy(ensemble, c)
    return total


class _Frame:
    """Everything the fixed-``q`` flows need at one configuration."""

    def __init__(self, ensemble, model, check):
        self.c, self.dc = coupling_with_gradient(ensemble, check)
        self.energies, self.bases, self.grads = [], [], []
        for qa in ensemble.q:
            sol = eigensolve(model.hamiltonian(qa))
            v = sol.states
            g = model.hamiltonian_gradient(qa)
            self.energies.append(sol.energies)
            self.bases.append(v)
            # gradient matrices in the eigenbasis
            self.grads.append(np.einsum("ki,nkl,lj->nij", v.conj(), g, v))
        w = ensemble.weights
        self.pairs = [(b, c) for b in range(w.size) for c in range(b + 1, w.size)]


def _electronic_flow(frame, ens, rho, p, tau):
    mu = ens.mu
    hbar = np.sqrt(mu)
    w = ens.weights
    for a in range(ens.size):
        e = frame.energies[a]
        gt, v = frame.grads[a], frame.bases[a]
        rt = v.conj().T @ rho[a] @ v
        omega = (e[:, None] - e[None, :]) / hbar
        phase = np.exp(-1j * omega * tau)
        # int_0^tau exp(-i omega t) dt
        f = tau * np.exp(-0.5j * omega * tau) * np.sinc(omega * tau / (2 * np.pi))
        p[a] -= np.real(np.einsum("jk,nkj->n", rt * f, gt))
        rho[a] = v @ (rt * phase) @ v.conj().T
        rho[a] = 0.5 * (rho[a] + rho[a].conj().T)
    purity = np.array([inner(r, r) for r in rho])
    dc = frame.dc
    dv = (-0.125 * mu * np.einsum("b,c,bcaj->aj", w, w, dc)
          + 0.25 * mu * np.einsum("b,bbaj->aj", w * w * purity, dc))
    p -= tau * dv / w[:, None]


def _pair_flow(frame, ens, rho, p, b, c, tau):
    w = ens.weights
    s = w[b] * rho[b] + w[c] * rho[c]
    u = hermitian_exp(s, 0.5 * np.sqrt(ens.mu) * frame.c[b, c] * tau)
    rho[b] = conjugate(u, rho[b])
    rho[c] = conjugate(u, rho[c])
    strength = 0.5 * ens.mu * w[b] * w[c] * inner(rho[b], rho[c])
    p -= (tau * strength) * frame.dc[b, c] / w[:, None]


def _fixed_q_flow(frame, ens, rho, p, tau):
    _electronic_flow(frame, ens, rho, p, 0.5 * tau)
    pairs = frame.pairs
    for k, (b, c) in enumerate(pairs):
        _pair_flow(frame, ens, rho, p, b, c, tau if k == len(pairs) - 1 else 0.5 * tau)
    for b, c in reversed(pairs[:-1]):
        _pair_flow(frame, ens, rho, p, b, c, 0.5 * tau)
    _electronic_flow(frame, ens, rho, p, 0.5 * tau)


class BohmionIntegrator:
    """Finite-``mu`` stepper that reuses the fixed-``q`` frame between steps.

    The coupling quadrature is self-checked on the first frame only; later
    frames use the same spacing and window rule.
    """

    def __init__(self, model, check=True):
        self.model = model
        self._check = check
        self._frame = None
        self._key = None

    def frame(self, ens):
        key = ens.q.tobytes()
        if key != self._key:
            self._frame = _Frame(ens, self.model, self._check)
            self._key = key
            self._check = False
        return self._frame

    def step(self, ens: BohmionEnsemble, dt) -> BohmionEnsemble:
        if not ens.mu > 0:
            raise InvalidInputError("the finite-mu stepper requires mu > 0")
        rho = ens.rho.copy()
        p = ens.p.copy()
        half = 0.5 * dt
        _fixed_q_flow(self.frame(ens), ens, rho, p, half)
        q = ens.q + dt * p / ens.metric.masses
        moved = _unchecked_replace(ens, q=q, p=p, rho=rho, t=ens.t + dt)
        _fixed_q_flow(self.frame(moved), moved, rho, p, half)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(rho))):
            raise NumericalError("non-finite state in bohmion step")
        return _unchecked_replace(moved, p=p, rho=rho)


def _unchecked_replace(ens, **changes):
    # the flows preserve every ensemble invariant; skip re-validation in the loop
    new = object.__new__(BohmionEnsemble)
    for name in ("weights", "q", "p", "rho", "kernel", "mu", "metric", "t"):
        object.__setattr__(new, name, changes.get(name, getattr(ens, name)))
    return new


def _classical_step(ens, model, dt, gap_min=GAP_MIN):
    q, p, rho = ens.q.copy(), ens.p.copy(), ens.rho.copy()
    for a in range(ens.size):
        particle = SlavedParticle(model, q[a], p[a], _pure_eigenprojector(model, ens, a),
                                  ens.metric, ens.t, gap_min)
        particle.step(dt)
        q[a], p[a], rho[a] = particle.q, particle.p, particle.rho
    return _unchecked_replace(ens, q=q, p=p, rho=rho, t=ens.t + dt)


def _pure_eigenprojector(model, ens, a):
    rho = ens.rho[a]
    h = model.hamiltonian(ens.q[a])
    scale = 1.0 + np.linalg.norm(h)
    if np.linalg.norm(h @ rho - rho @ h) > 1e-8 * scale or abs(inner(rho, rho) - 1.0) > 1e-10:
        raise InvalidInputError(
            f"particle {a}: mu = 0 needs rho_a to project onto an eigenstate of H_e(q_a)"
        )
    return rho


def bohmion_step(ensemble: BohmionEnsemble, model, dt, integrator=None) -> BohmionEnsemble:
    """Advance the ensemble by one step of length ``dt``.

    For ``mu > 0`` this is the symmetric exact-sub-flow splitting described in
    the module docstring. For ``mu = 0`` each particle takes one velocity
    Verlet step on the adiabatic surface selected by its density matrix,
    which must then be a projector onto an eigenstate.
    """
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    if ensemble.mu == 0:
        return _classical_step(ensemble, model, dt)
    integrator = BohmionIntegrator(model) if integrator is None else integrator
    return integrator.step(ensemble, dt)


@dataclass
class BohmionRun:
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    purity_min: np.ndarray
    trace_error: np.ndarray
    weights: np.ndarray
    final: BohmionEnsemble = field(repr=False, default=None)

    def mean_q(self):
        return np.einsum("a,tad->td", self.weights, self.q)

    def mean_p(self):
        return np.einsum("a,tad->td", self.weights, self.p)

    def ensemble_table(self):
        """Columns ``t, mean_q..., mean_p..., energy, purity_min``."""
        return np.column_stack([self.t, self.mean_q(), self.mean_p(), self.energy, self.purity_min])


def run_bohmion(ensemble: BohmionEnsemble, model, dt, n_steps, record_every=1, check=True):
    """Finite-``mu`` bohmion trajectory, recording every ``record_every`` steps."""
    if not ensemble.mu > 0:
        raise InvalidInputError("run_bohmion needs mu > 0; use run_bohmion_classical at mu = 0")
    if int(n_steps) != n_steps or n_steps < 0 or record_every < 1:
        raise InvalidInputError("n_steps must be a non-negative integer and record_every >= 1")
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    integ = BohmionIntegrator(model, check=check)
    rows = {k: [] for k in ("t", "q", "p", "energy", "purity_min", "trace_error")}

    def record(ens):
        frame = integ.frame(ens)
        rows["t"].append(ens.t)
        rows["q"].append(ens.q.copy())
        rows["p"].append(ens.p.copy())
        rows["energy"].append(bohmion_energy(ens, model, coupling=frame.c))
        rows["purity_min"].append(float(np.min(ens.purities())))
        rows["trace_error"].append(float(np.max(np.abs(ens.traces() - 1.0))))

    ens = ensemble
    record(ens)
    try:
        for n in range(1, int(n_steps) + 1):
            ens = integ.step(ens, dt)
            if n % record_every == 0:
                record(ens)
    except NumericalError as exc:
        exc.partial = _bohmion_run(rows, ens)
        raise
    return _bohmion_run(rows, ens)


def _bohmion_run(rows, ens):
    return BohmionRun(
        t=np.array(rows["t"]), q=np.array(rows["q"]), p=np.array(rows["p"]),
        energy=np.array(rows["energy"]), purity_min=np.array(rows["purity_min"]),
        trace_error=np.array(rows["trace_error"]), weights=ens.weights, final=ens,
    )


@dataclass
class ClassicalEnsembleRun:
    """Decoupled ``mu = 0`` particle trajectories with ensemble averages."""

    trajectories: list
    weights: np.ndarray

    @property
    def t(self):
        return self.trajectories[0].t

    def average(self, f):
        """``sum_a w_a f(q_a(t))`` for ``f`` mapping a ``(T, dim)`` array to ``(T, ...)``."""
        return sum(w * np.asarray(f(tr.q)) for w, tr in zip(self.weights, self.trajectories))

    def mean_q(self):
        return self.average(lambda q: q)

    def mean_p(self):
        return sum(w * tr.p for w, tr in zip(self.weights, self.trajectories))


def run_bohmion_classical(ensemble: BohmionEnsemble, model, dt, n_steps, record_every=1,
                          gap_min=GAP_MIN) -> ClassicalEnsembleRun:
    """``mu = 0`` bohmions: the kernel term drops and particles decouple.

    Each ``rho_a`` must be a projector onto an eigenstate of ``H_e(q_a)``; it
    stays slaved to that spectral projector while particle ``a`` follows the
    force ``-<rho_a, grad H_e(q_a)>``.
    """
    trajectories = []
    for a in range(ensemble.size):
        particle = SlavedParticle(model, ensemble.q[a], ensemble.p[a],
                                  _pure_eigenprojector(model, ensemble, a), ensemble.metric,
                                  ensemble.t, gap_min)
        trajectories.append(particle.run(dt, n_steps, record_every))
    return ClassicalEnsembleRun(trajectories, ensemble.weights)


def with_mu(ensemble: BohmionEnsemble, mu) -> BohmionEnsemble:
    return replace(ensemble, mu=mu)
