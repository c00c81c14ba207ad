"""Model electronic Hamiltonians with analytic nuclear gradients.

All models are finite-dimensional stand-ins for the Coulombic electronic
Hamiltonian: a family of Hermitian ``L x L`` matrices ``H(q)`` smooth in the
nuclear configuration ``q``. Any nucleus-nucleus repulsion is folded into
``H(q)`` as a multiple of the identity.
"""

from abc import ABC, abstractmethod

import numpy as np

from ..errors import InvalidInputError


class ElectronicModel(ABC):
    """Interface every electronic model implements.

    Subclasses set ``dim`` (electronic dimension, at least 2) and
    ``nuclear_dim`` and provide the two methods below.
    """

    dim: int
    nuclear_dim: int

    @abstractmethod
    def hamiltonian(self, q) -> np.ndarray:
        """Hermitian ``(dim, dim)`` matrix at configuration ``q``."""

    @abstractmethod
    def hamiltonian_gradient(self, q) -> np.ndarray:
        """Array of shape ``(nuclear_dim, dim, dim)`` holding ``dH/dq_j``."""

    def _coords(self, q):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if q.shape != (self.nuclear_dim,):
            raise InvalidInputError(
                f"configuration has shape {q.shape}, model expects ({self.nuclear_dim},)"
            )
        return q


class LinearCrossing(ElectronicModel):
    """Two-level avoided crossing ``H(q) = [[q, c], [c, -q]]``.

    The adiabatic energies are ``-+sqrt(q^2 + c^2)`` and the gap never closes
    for ``c > 0``.
    """

    def __init__(self, coupling=1.0):
        if not coupling > 0:
            raise InvalidInputError("coupling must be positive")
        self.coupling = float(coupling)
        self.dim = 2
        self.nuclear_dim = 1

    def hamiltonian(self, q):
        (x,) = self._coords(q)
        c = self.coupling
        return np.array([[x, c], [c, -x]], dtype=complex)

    def hamiltonian_gradient(self, q):
        self._coords(q)
        return np.array([[[1.0, 0.0], [0.0, -1.0]]], dtype=complex)


class ShiftedOscillators(ElectronicModel):
    """Displaced harmonic diabats with constant couplings.

    ``H_kk(q) = omega_k |q - q_k|^2 / 2 + delta_k`` and ``H_jk = V_jk`` for
    ``j != k``. Centers ``q_k`` are vectors in ``nuclear_dim`` dimensions.
    """

    def __init__(self, omegas, centers, offsets=None, couplings=0.0, nuclear_dim=None):
        omegas = np.asarray(omegas, dtype=float)
        levels = omegas.size
        if levels < 2:
            raise InvalidInputError("at least two levels are required")
        if np.any(omegas < 0):
            raise InvalidInputError("oscillator frequencies must be non-negative")
        centers = np.asarray(centers, dtype=float)
        if centers.ndim == 1:
            centers = centers[:, None]
        if nuclear_dim is None:
            nuclear_dim = centers.shape[1]
        if centers.shape != (levels, nuclear_dim):
            raise InvalidInputError("centers must have shape (levels, nuclear_dim)")
        offsets = np.zeros(levels) if offsets is None else np.asarray(offsets, dtype=float)
        if offsets.shape != (levels,):
            raise InvalidInputError("offsets must have one entry per level")
        couplings = np.asarray(couplings, dtype=complex)
        if couplings.ndim == 0:
            v = np.full((levels, levels), couplings, dtype=complex)
        else:
            v = np.array(couplings, dtype=complex)
        if v.shape != (levels, levels) or not np.allclose(v, v.conj().T, atol=1e-14):
            raise InvalidInputError("couplings must be a scalar or a Hermitian matrix")
        np.fill_diagonal(v, 0.0)
        self.omegas = omegas
        self.centers = centers
        self.offsets = offsets
        self.couplings = v
        self.dim = levels
        self.nuclear_dim = int(nuclear_dim)

    def diabatic_energies(self, q):
        q = self._coords(q)
        return 0.5 * self.omegas * np.sum((q - self.centers) ** 2, axis=1) + self.offsets

    def hamiltonian(self, q):
        h = self.couplings.copy()
        h[np.diag_indices(self.dim)] = self.diabatic_energies(q)
        return h

    def hamiltonian_gradient(self, q):
        q = self._coords(q)
        grad = np.zeros((self.nuclear_dim, self.dim, self.dim), dtype=complex)
        slopes = self.omegas[:, None] * (q - self.centers)
        for j in range(self.nuclear_dim):
            grad[j][np.diag_indices(self.dim)] = slopes[:, j]
        return grad


class SoftCoulombChain(ElectronicModel):
    """One electron on a 1D grid in the field of soft-Coulomb nuclei.

    The electronic grid has ``grid_points`` interior points on
    ``[-box/2, box/2]`` with hard walls; kinetic energy uses the second-order
    finite-difference Laplacian. Nucleus ``n`` sits at ``q_n`` with charge
    ``Z_n``::

        V(x; q) = -sum_n Z_n / sqrt((x - q_n)^2 + a^2)
        V_nn(q) = sum_{n<m} Z_n Z_m / sqrt((q_n - q_m)^2 + b^2)

    ``V_nn`` enters as a scalar shift of the electronic Hamiltonian.
    """

    def __init__(self, grid_points=32, box=12.0, charges=(1.0,), softening=1.0,
                 nuclear_softening=1.0, repulsion=True):
        if grid_points < 2:
            raise InvalidInputError("grid_points must be at least 2")
        if box <= 0 or softening <= 0 or nuclear_softening <= 0:
            raise InvalidInputError("box and softening lengths must be positive")
        self.charges = np.atleast_1d(np.asarray(charges, dtype=float))
        self.dim = int(grid_points)
        self.nuclear_dim = self.charges.size
        self.box = float(box)
        self.softening = float(softening)
        self.nuclear_softening = float(nuclear_softening)
        self.repulsion = bool(repulsion)
        self.spacing = self.box / (self.dim + 1)
        self.x = -0.5 * self.box + self.spacing * np.arange(1, self.dim + 1)
        lap = (np.diag(np.full(self.dim - 1, 1.0), -1) + np.diag(np.full(self.dim - 1, 1.0), 1)
               - 2.0 * np.eye(self.dim))
        self._kinetic = -0.5 * lap / self.spacing ** 2

    def _nuclear_repulsion(self, q):
        e, grad = 0.0, np.zeros(self.nuclear_dim)
        if not self.repulsion:
            return e, grad
        b2 = self.nuclear_softening ** 2
        for n in range(self.nuclear_dim):
            for m in range(n + 1, self.nuclear_dim):
                d = q[n] - q[m]
                zz = self.charges[n] * self.charges[m]
                e += zz / np.sqrt(d * d + b2)
                f = -zz * d / (d * d + b2) ** 1.5
                grad[n] += f
                grad[m] -= f
        return e, grad

    def hamiltonian(self, q):
        q = self._coords(q)
        d = self.x[None, :] - q[:, None]
        v = -np.sum(self.charges[:, None] / np.sqrt(d ** 2 + self.softening ** 2), axis=0)
        e_nn, _ = self._nuclear_repulsion(q)
        return (self._kinetic + np.diag(v + e_nn)).astype(complex)

    def hamiltonian_gradient(self, q):
        q = self._coords(q)
        d = self.x[None, :] - q[:, None]
        # d/dq_n of -Z/sqrt((x-q)^2+a^2) = -Z (x-q) / ((x-q)^2+a^2)^{3/2}
        dv = -self.charges[:, None] * d / (d ** 2 + self.softening ** 2) ** 1.5
        _, g_nn = self._nuclear_repulsion(q)
        grad = np.zeros((self.nuclear_dim, self.dim, self.dim), dtype=complex)
        for n in range(self.nuclear_dim):
            grad[n][np.diag_indices(self.dim)] = dv[n] + g_nn[n]
        return grad


class ScalarSurface(ElectronicModel):
    """Wrap a scalar potential ``E(q)`` as a model whose levels are ``E(q) + shifts``.

    Useful for checking the electronic machinery against a known surface:
    the Hamiltonian is ``diag(E(q) + shift_k)`` so every eigenvector is a
    fixed basis vector.
    """

    def __init__(self, energy, gradient, nuclear_dim=1, shifts=(0.0, 10.0)):
        self._energy = energy
        self._gradient = gradient
        self.shifts = np.asarray(shifts, dtype=float)
        self.dim = self.shifts.size
        self.nuclear_dim = int(nuclear_dim)

    def hamiltonian(self, q):
        q = self._coords(q)
        return np.diag(self._energy(q) + self.shifts).astype(complex)

    def hamiltonian_gradient(self, q):
        q = self._coords(q)
        g = np.atleast_1d(self._gradient(q))
        eye = np.eye(self.dim, dtype=complex)
        return g[:, None, None] * eye[None]


def fd_hamiltonian_gradient(model, q, h=1e-5):
    """Central finite-difference ``dH/dq``. For verification only; never used in dynamics."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    out = np.zeros((q.size, model.dim, model.dim), dtype=complex)
    for j in range(q.size):
        e = np.zeros_like(q)
        e[j] = h
        out[j] = (model.hamiltonian(q + e) - model.hamiltonian(q - e)) / (2 * h)
    return out


MODEL_KINDS = {
    "linear_crossing": LinearCrossing,
    "shifted_oscillators": ShiftedOscillators,
    "soft_coulomb": SoftCoulombChain,
}
