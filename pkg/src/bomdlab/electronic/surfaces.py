"""Potential energy surfaces, Hellmann-Feynman forces and state tracking."""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, NearDegeneracyError, StateTrackingError
from .jacobi import EigenSolution, eigensolve

GAP_MIN = 1e-6
MIN_OVERLAP = 0.5


def phase_fix(phi):
    """Rotate ``phi`` by a global phase so its largest component is real and positive.

    Ties in magnitude go to the lowest index.
    """
    phi = np.asarray(phi, dtype=complex)
    k = int(np.argmax(np.abs(phi)))
    mag = abs(phi[k])
    if mag == 0.0:
        raise InvalidInputError("cannot fix the phase of a zero vector")
    return phi * (phi[k].conjugate() / mag)


def ground_surface(model, q, guess=None):
    """Ground energy, gauge-fixed ground state and gap to the first excited level."""
    sol = eigensolve(model.hamiltonian(q), guess=guess)
    return float(sol.energies[0]), phase_fix(sol.states[:, 0]), sol.level_gap(0)


def hellmann_feynman_force(model, q, phi, gap=None, gap_min=GAP_MIN):
    """Force covector ``-<phi, dH/dq_j phi>``.

    When ``gap`` is given, ``phi`` is treated as an eigenstate and the force is
    refused if the gap to the neighbouring levels is below ``gap_min``.
    """
    if gap is not None and gap < gap_min:
        raise NearDegeneracyError(
            f"spectral gap {gap:.3e} below gap_min={gap_min:.1e} at q={np.atleast_1d(q)}",
            gap=gap,
        )
    phi = np.asarray(phi, dtype=complex)
    grad = model.hamiltonian_gradient(q)
    return -np.real(np.einsum("i,jik,k->j", phi.conj(), grad, phi))


def density_force(model, q, rho):
    """Force ``-<rho, dH/dq_j>`` for a density matrix ``rho``."""
    grad = model.hamiltonian_gradient(q)
    return -np.real(np.einsum("ji,nij->n", rho, grad))


def adiabatic_continuation(phi_prev, solution: EigenSolution):
    """Pick the eigenpair that continues ``phi_prev``.

    Returns ``(k, energy, phi)`` where ``phi`` is eigenvector ``k`` rotated so
    that ``<phi_prev|phi>`` is real and positive.
    """
    overlaps = solution.states.conj().T @ np.asarray(phi_prev, dtype=complex)
    mags = np.abs(overlaps)
    k = int(np.argmax(mags))
    if mags[k] < MIN_OVERLAP:
        raise StateTrackingError(
            f"lost track of the electronic state (best overlap {mags[k]:.3f})",
            overlap=float(mags[k]),
        )
    # overlaps[k] = <phi_k|phi_prev>; multiply phi_k by it to make <phi_prev|phi_k> > 0
    phi = solution.states[:, k] * (overlaps[k] / mags[k])
    return k, float(solution.energies[k]), phi


@dataclass
class SurfacePoint:
    energy: float
    gap: float
    force: np.ndarray
    state: np.ndarray
    level: int


class AdiabaticTracker:
    """Follow one adiabatic surface of a model along a path in configuration space.

    Each call to :meth:`evaluate` solves the eigenvalue problem at the new
    configuration (warm-started from the previous basis), selects the level
    with maximal overlap with the tracked state, and returns the
    Hellmann-Feynman force. Only the configuration enters the electronic
    stage.

    The force is computed from the eigensolver's own eigenvector, so phases
    attached to the tracked state never reach the nuclear dynamics.
    """

    def __init__(self, model, q0, level=0, state=None, gap_min=GAP_MIN, warm_start=True):
        self.model = model
        self.gap_min = gap_min
        self.warm_start = warm_start
        self._basis = None
        sol = self._solve(q0)
        if state is None:
            if not 0 <= level < model.dim:
                raise InvalidInputError(f"level {level} out of range for a {model.dim}-level model")
            state = phase_fix(sol.states[:, level])
        self.state = np.asarray(state, dtype=complex)
        self._first = sol

    def _solve(self, q):
        sol = eigensolve(self.model.hamiltonian(q), guess=self._basis if self.warm_start else None)
        self._basis = sol.states
        return sol

    def evaluate(self, q) -> SurfacePoint:
        if self._first is not None:
            sol, self._first = self._first, None
        else:
            sol = self._solve(q)
        k, energy, phi = adiabatic_continuation(self.state, sol)
        gap = sol.level_gap(k)
        force = hellmann_feynman_force(self.model, q, sol.states[:, k], gap=gap, gap_min=self.gap_min)
        self.state = phi
        return SurfacePoint(energy=energy, gap=gap, force=force, state=phi, level=k)

    def projector(self):
        return np.outer(self.state, self.state.conj())
