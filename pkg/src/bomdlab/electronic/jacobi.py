"""Cyclic Jacobi eigensolver for dense Hermitian matrices.

Rotations are applied in parallel (round-robin) order: each round annihilates
``n/2`` disjoint off-diagonal pairs at once, so a round is a single unitary
similarity transform and the sweep is a short sequence of matrix products.
Electronic dimensions here are at most a few hundred, where the O(n^3) cost
with near machine-precision residuals beats anything cleverer.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ConvergenceError, InvalidInputError

HERMITIAN_TOL = 1e-12
OFF_TOL = 1e-14
MAX_SWEEPS = 60


@dataclass(frozen=True)
class EigenSolution:
    """Ascending eigenvalues and the matching orthonormal eigenvectors (columns)."""

    energies: np.ndarray
    states: np.ndarray

    @property
    def gap(self) -> float:
        """Smallest difference between adjacent eigenvalues."""
        if self.energies.size < 2:
            return np.inf
        return float(np.min(np.diff(self.energies)))

    def state(self, k: int) -> np.ndarray:
        return self.states[:, k]

    def level_gap(self, k: int) -> float:
        """Distance from level ``k`` to the nearest other level."""
        others = np.delete(self.energies, k)
        if others.size == 0:
            return np.inf
        return float(np.min(np.abs(others - self.energies[k])))


@lru_cache(maxsize=64)
def _schedule(n):
    """Round-robin pairing of ``n`` (even) indices: ``n - 1`` rounds of ``n/2`` pairs."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        pairs = [(players[i], players[n - 1 - i]) for i in range(n // 2)]
        p = np.array([min(a, b) for a, b in pairs])
        q = np.array([max(a, b) for a, b in pairs])
        rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _off_norm(a):
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return np.linalg.norm(off)


def _check_hermitian(h):
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise InvalidInputError("matrix has non-finite entries")
    h = h.astype(complex)
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    asym = float(np.max(np.abs(h - h.conj().T), initial=0.0))
    if asym > HERMITIAN_TOL * scale:
        raise InvalidInputError(f"matrix is not Hermitian (max |H - H^dagger| = {asym:.3e})")
    return 0.5 * (h + h.conj().T)


def jacobi_diagonalize(a, tol=OFF_TOL, max_sweeps=MAX_SWEEPS):
    """Diagonalize a Hermitian matrix in place of a copy.

    Returns ``(diag, v)`` with ``v^dagger a v = diag(diag)`` (unsorted).
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    m = n + (n % 2)
    if m != n:
        # pad with a decoupled dummy level; it never rotates against real levels
        padded = np.zeros((m, m), dtype=complex)
        padded[:n, :n] = a
        a = padded
    v = np.eye(m, dtype=complex)
    scale = np.linalg.norm(a)
    if scale == 0.0 or n == 1:
        return np.real(np.diag(a))[:n].copy(), v[:n, :n]
    target = tol * scale
    rounds = _schedule(m)
    w = np.eye(m, dtype=complex)
    flat = w.reshape(-1)
    off = _off_norm(a)
    for sweep in range(max_sweeps):
        if off <= target:
            break
        for p, q in rounds:
            if m != n:
                keep = q < n
                p, q = p[keep], q[keep]
            apq = a[p, q]
            mag = np.abs(apq)
            active = mag > 1e-300 * scale
            if not np.any(active):
                continue
            p, q, apq, mag = p[active], q[active], apq[active], mag[active]
            phase = apq / mag
            tau = (a[q, q].real - a[p, p].real) / (2.0 * mag)
            t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            w[:] = 0.0
            np.fill_diagonal(w, 1.0)
            flat[p * m + p] = c
            flat[p * m + q] = s
            flat[q * m + p] = -s * phase.conj()
            flat[q * m + q] = c * phase.conj()
            a = w.conj().T @ a @ w
            v = v @ w
        a = 0.5 * (a + a.conj().T)
        off = _off_norm(a)
    else:
        if off > target:
            raise ConvergenceError(
                f"Jacobi iteration did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {off:.3e}, target {target:.3e})",
                residual=off,
            )
    return np.real(np.diag(a))[:n].copy(), v[:n, :n]


def eigensolve(h, guess=None, tol=OFF_TOL, max_sweeps=MAX_SWEEPS, check=True):
    """Eigen-decompose a Hermitian matrix.

    Parameters
    ----------
    h : (n, n) array_like
        Hermitian matrix; symmetrized defensively after the tolerance check.
    guess : (n, n) array_like, optional
        Unitary basis used to warm-start the iteration (typically the previous
        time step's eigenvectors). ``h`` is first rotated into this basis, which
        leaves only a nearly diagonal matrix for the Jacobi sweeps.
    check : bool
        Verify the eigen-residual against ``1e-10 * (1 + ||h||_F)``.

    Returns
    -------
    EigenSolution
        Energies in ascending order. Exactly tied energies keep the order in
        which the iteration produced them (stable sort), so the output is
        deterministic for a given input.
    """
    h = _check_hermitian(h)
    if guess is not None:
        guess = np.asarray(guess, dtype=complex)
        if guess.shape != h.shape:
            raise InvalidInputError("warm-start basis has the wrong shape")
        a = guess.conj().T @ h @ guess
        diag, v = jacobi_diagonalize(a, tol=tol, max_sweeps=max_sweeps)
        v = guess @ v
    else:
        diag, v = jacobi_diagonalize(h, tol=tol, max_sweeps=max_sweeps)
    order = np.argsort(diag, kind="stable")
    energies = diag[order]
    states = v[:, order]
    if check:
        norm_h = np.linalg.norm(h)
        resid = np.max(np.linalg.norm(h @ states - states * energies, axis=0), initial=0.0)
        if resid > 1e-10 * (1.0 + norm_h):
            raise ConvergenceError(f"eigen-residual {resid:.3e} exceeds tolerance", residual=resid)
    return EigenSolution(energies=energies, states=states)
