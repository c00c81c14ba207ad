"""Validation and unitary helpers shared by the particle closures."""

import numpy as np

from .bomd import _Recorder
from .electronic import GAP_MIN, eigensolve
from .electronic.surfaces import MIN_OVERLAP
from .errors import InvalidInputError, NearDegeneracyError, StateTrackingError

WEIGHT_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-12


def check_weights(weights, count=None):
    w = np.atleast_1d(np.asarray(weights, dtype=float)).copy()
    if w.ndim != 1 or w.size == 0:
        raise InvalidInputError("weights must be a non-empty vector")
    if count is not None and w.size != count:
        raise InvalidInputError(f"expected {count} weights, got {w.size}")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise InvalidInputError("weights must be strictly positive")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise InvalidInputError(f"weights must sum to 1, got {w.sum():.15g}")
    return w


def check_densities(rho, count):
    """Validate a stack of density matrices of shape ``(count, L, L)``."""
    rho = np.asarray(rho, dtype=complex).copy()
    if rho.ndim != 3 or rho.shape[0] != count or rho.shape[1] != rho.shape[2]:
        raise InvalidInputError(f"density matrices must have shape ({count}, L, L)")
    for a, r in enumerate(rho):
        if np.max(np.abs(r - r.conj().T)) > TRACE_TOL:
            raise InvalidInputError(f"density matrix {a} is not Hermitian")
        if abs(np.trace(r).real - 1.0) > TRACE_TOL:
            raise InvalidInputError(f"density matrix {a} does not have unit trace")
        if eigensolve(r).energies[0] < -PSD_TOL:
            raise InvalidInputError(f"density matrix {a} has a negative eigenvalue")
    return rho


def projector(phi):
    phi = np.asarray(phi, dtype=complex)
    phi = phi / np.linalg.norm(phi)
    return np.outer(phi, phi.conj())


def dominant_state(rho):
    """Eigenvector of ``rho`` with the largest eigenvalue."""
    return eigensolve(rho).states[:, -1]


def inner(a, b) -> float:
    """Frobenius pairing ``Re tr(a^dagger b)``."""
    return float(np.real(np.vdot(a, b)))


def hermitian_exp(h, tau):
    """``exp(-i tau h)`` for Hermitian ``h`` via its eigendecomposition."""
    sol = eigensolve(h)
    v = sol.states
    return (v * np.exp(-1j * tau * sol.energies)) @ v.conj().T


def conjugate(u, rho):
    out = u @ rho @ u.conj().T
    return 0.5 * (out + out.conj().T)


class SlavedParticle:
    """A ``mu = 0`` particle whose density is slaved to the spectrum of ``H_e(q)``.

    At ``mu = 0`` the electronic equation reduces to ``[H_e(q), rho] = 0``, so
    ``rho = sum_k n_k P_k(q)`` with populations ``n_k`` fixed by the initial
    data and spectral projectors ``P_k`` continued by projector overlap. The
    nuclei follow kick-drift-kick steps with force ``-<rho, grad H_e>``.
    Projectors are phase free, so no eigenvector gauge enters.
    """

    def __init__(self, model, q, p, rho, metric, t=0.0, gap_min=GAP_MIN):
        self.model = model
        self.metric = metric
        self.gap_min = gap_min
        self.q = np.array(q, dtype=float)
        self.p = np.array(p, dtype=float)
        self.t = float(t)
        rho = np.asarray(rho, dtype=complex)
        sol = eigensolve(model.hamiltonian(self.q))
        v = sol.states
        pops = np.einsum("ki,kl,li->i", v.conj(), rho, v).real
        if np.linalg.norm((v * pops) @ v.conj().T - rho) > 1e-8:
            raise InvalidInputError("rho must commute with H_e(q) when mu = 0")
        self.populations = pops
        self._uniform = bool(np.ptp(pops) <= 1e-14)
        self._update(sol)

    def _update(self, sol):
        v = sol.states
        if not self._uniform and hasattr(self, "_states"):
            overlap = np.abs(v.conj().T @ self._states) ** 2
            match = np.argmax(overlap, axis=1)
            worst = float(np.min(overlap[np.arange(match.size), match]))
            if len(set(match.tolist())) != match.size or worst < MIN_OVERLAP:
                raise StateTrackingError(
                    f"spectral projectors lost continuity (overlap {worst:.3g})", overlap=worst)
            self.populations = self.populations[match]
        gaps = np.diff(sol.energies)
        distinct = np.abs(np.diff(self.populations)) > 1e-14
        self.gap = float(np.min(gaps[distinct])) if distinct.any() else np.inf
        if self.gap < self.gap_min:
            raise NearDegeneracyError(
                f"gap {self.gap:.3g} fell below {self.gap_min:.3g} at t = {self.t:.6g}", gap=self.gap)
        self._states = v
        self.rho = (v * self.populations) @ v.conj().T
        self.energy = float(np.dot(self.populations, sol.energies))
        grad = self.model.hamiltonian_gradient(self.q)
        self.force = -np.einsum("ab,jba->j", self.rho, grad).real

    def step(self, dt):
        self.p = self.p + 0.5 * dt * self.force
        self.q = self.q + dt * self.metric.raise_(self.p)
        self.t += dt
        self._update(eigensolve(self.model.hamiltonian(self.q), guess=self._states))
        self.p = self.p + 0.5 * dt * self.force

    def run(self, dt, n_steps, record_every=1):
        """Advance ``n_steps`` and return the sampled path as a ``Trajectory``."""
        rec = _Recorder(self.metric)
        rec.add(self.t, self.q, self.p, self.energy, self.gap)
        for n in range(1, int(n_steps) + 1):
            self.step(dt)
            if n % record_every == 0:
                rec.add(self.t, self.q, self.p, self.energy, self.gap)
        return rec.trajectory()
