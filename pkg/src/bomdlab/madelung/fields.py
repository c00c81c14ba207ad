"""Exact-factorization fields of a grid wavefunction and their gauge structure.

Stencils are periodic central differences. Quantities that enter the
hydrodynamic diagnostics (``u``, ``rho``, the density-matrix form of the
electronic potential) are built from gauge-invariant stencils so that a
pointwise re-phasing of ``phi`` leaves them unchanged to round-off.
"""

import heapq
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateFieldError, InvalidInputError
from ..units import MassMetric
from .grid import Grid, GridWavefunction

NODE_FLOOR = 1e-10


@dataclass(frozen=True)
class MadelungFields:
    """``Psi = sqrt(D) exp(iS/sqrt(mu)) phi`` on the points where ``mask`` holds.

    ``S``, ``phi`` and ``A_B`` are NaN off the mask.
    """

    grid: Grid
    mu: float
    metric: MassMetric
    D: np.ndarray
    S: np.ndarray
    phi: np.ndarray
    A_B: np.ndarray
    mask: np.ndarray
    t: float = 0.0

    @property
    def hbar(self) -> float:
        return float(np.sqrt(self.mu))

    def omega(self) -> np.ndarray:
        """Nuclear factor ``sqrt(D) exp(iS/sqrt(mu))``; zero off the mask."""
        out = np.sqrt(self.D) * np.exp(1j * np.where(self.mask, self.S, 0.0) / self.hbar)
        return np.where(self.mask, out, 0.0)

    def psi(self) -> np.ndarray:
        """Reconstructed ``Omega phi``; zero off the mask."""
        phi = np.where(self.mask[..., None], self.phi, 0.0)
        return self.omega()[..., None] * phi

    def density_matrix(self) -> np.ndarray:
        """``rho = phi phi^dagger`` per point, shape ``(*shape, L, L)``."""
        return self.phi[..., :, None] * self.phi[..., None, :].conj()


def _shift(a, axis, k):
    # value at index i + k along a grid axis (periodic)
    return np.roll(a, -k, axis=axis)


def central_difference(f, grid: Grid, axis):
    h = grid.spacing[axis]
    return (_shift(f, axis, 1) - _shift(f, axis, -1)) / (2 * h)


def gradient(f, grid: Grid):
    """Central-difference gradient; last axis indexes the direction."""
    return np.stack([central_difference(f, grid, j) for j in range(grid.dim)], axis=-1)


def _fix_phases(phi):
    # pointwise version of electronic.phase_fix: largest component real positive
    idx = np.argmax(np.abs(phi), axis=-1)[..., None]
    lead = np.take_along_axis(phi, idx, axis=-1)
    mag = np.abs(lead)
    return phi * np.where(mag > 0, lead.conj() / np.where(mag > 0, mag, 1.0), 1.0)


def _wrap(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


def _unwrap_1d(theta, weight, mask):
    out = np.full(theta.shape, np.nan)
    remaining = mask.copy()
    n = theta.size
    while remaining.any():
        seed = int(np.argmax(np.where(remaining, weight, -np.inf)))
        out[seed] = theta[seed]
        remaining[seed] = False
        for step in (1, -1):
            i = seed
            while True:
                j = i + step
                if j < 0 or j >= n or not remaining[j]:
                    break
                out[j] = out[i] + _wrap(theta[j] - theta[i])
                remaining[j] = False
                i = j
    return out


def _unwrap_2d(theta, weight, mask):
    # quality-guided flood fill: always extend from the densest assigned neighbour
    out = np.full(theta.shape, np.nan)
    remaining = mask.copy()
    nx, ny = theta.shape
    while remaining.any():
        seed = np.unravel_index(int(np.argmax(np.where(remaining, weight, -np.inf))), theta.shape)
        out[seed] = theta[seed]
        remaining[seed] = False
        heap = []

        def push(i, j):
            for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                if 0 <= a < nx and 0 <= b < ny and remaining[a, b]:
                    heapq.heappush(heap, (-weight[a, b], a, b, i, j))

        push(*seed)
        while heap:
            _, a, b, i, j = heapq.heappop(heap)
            if not remaining[a, b]:
                continue
            out[a, b] = out[i, j] + _wrap(theta[a, b] - theta[i, j])
            remaining[a, b] = False
            push(a, b)
    return out


def xf_extract(psi: GridWavefunction, node_floor=NODE_FLOOR) -> MadelungFields:
    """Split ``psi`` into density, phase and electronic factor.

    ``node_floor`` is relative to the density maximum. The electronic factor is
    gauge-fixed pointwise with the largest component real and positive; the
    nuclear phase is unwrapped outward from the density maximum.

    Examples
    --------
    >>> import numpy as np
    >>> from bomdlab.madelung.grid import Grid, GridWavefunction
    >>> g = Grid.line(64, -8.0, 8.0)
    >>> x = g.coords[..., 0]
    >>> psi = GridWavefunction.normalized(g, np.exp(-x**2)[:, None], mu=0.01)
    >>> f = xf_extract(psi)
    >>> bool(np.allclose(f.S[f.mask], 0.0)), bool(np.allclose(f.phi[f.mask], 1.0))
    (True, True)
    """
    values = psi.as_complex128()
    D = np.sum(np.abs(values) ** 2, axis=-1)
    dmax = float(D.max())
    mask = D > node_floor * dmax
    if not dmax > 0 or not mask.any():
        raise DegenerateFieldError("density is below the node floor everywhere")
    root = np.sqrt(np.where(mask, D, 1.0))
    phi = _fix_phases(values / root[..., None])
    omega = np.einsum("...k,...k->...", phi.conj(), values)
    theta = np.angle(omega)
    unwrap = _unwrap_1d if psi.grid.dim == 1 else _unwrap_2d
    S = np.sqrt(psi.mu) * unwrap(theta, D, mask)
    phi = np.where(mask[..., None], phi, np.nan)
    fields = MadelungFields(psi.grid, psi.mu, psi.metric, D, S, phi, None, mask, psi.t)
    object.__setattr__(fields, "A_B", berry_connection(fields))
    return fields


def regauge(fields: MadelungFields, theta) -> MadelungFields:
    """Apply ``phi -> exp(i theta) phi`` and the compensating ``S -> S - sqrt(mu) theta``."""
    theta = np.broadcast_to(np.asarray(theta, dtype=float), fields.D.shape)
    phi = fields.phi * np.exp(1j * theta)[..., None]
    S = fields.S - fields.hbar * theta
    out = MadelungFields(fields.grid, fields.mu, fields.metric, fields.D, S, phi, None,
                         fields.mask, fields.t)
    object.__setattr__(out, "A_B", berry_connection(out))
    return out


def _link_phase(v, grid, axis):
    # arg of <v_{i-1}|v_i><v_i|v_{i+1}>, a gauge-covariant central phase difference
    back = np.einsum("...k,...k->...", _shift(v, axis, -1).conj(), v)
    fwd = np.einsum("...k,...k->...", v.conj(), _shift(v, axis, 1))
    return np.angle(back * fwd) / (2 * grid.spacing[axis])


def berry_connection(fields: MadelungFields) -> np.ndarray:
    """``A_B = <phi| -i sqrt(mu) grad phi>`` from neighbour overlaps.

    The stencil is exact for plane-wave phases and shifts by exactly
    ``sqrt(mu) grad_h theta`` under a re-phasing. Shape ``(*shape, dim)``.
    """
    phi = fields.phi
    return fields.hbar * np.stack(
        [_link_phase(phi, fields.grid, j) for j in range(fields.grid.dim)], axis=-1)


def velocity_field(fields: MadelungFields) -> np.ndarray:
    """Hydrodynamic velocity ``u = G^-1 (grad S + A_B)``.

    Evaluated from neighbour overlaps of the reconstructed ``Psi``, so it is
    independent of how the phase is split between ``S`` and ``phi``.
    """
    psi = fields.psi()
    grad = fields.hbar * np.stack(
        [_link_phase(psi, fields.grid, j) for j in range(fields.grid.dim)], axis=-1)
    grad = np.where(fields.mask[..., None], grad, np.nan)
    return fields.metric.raise_(grad)


@dataclass(frozen=True)
class ElectronicPotential:
    """Electronic potential in three discretizations.

    ``eps`` and ``qgt_trace`` share a tangent-projected central stencil and
    agree to round-off. ``eps_rho = (mu/4) ||grad rho||^2`` is gauge invariant
    pointwise and is the form used by the hydrodynamic diagnostics.
    """

    eps: np.ndarray
    qgt: np.ndarray
    qgt_trace: np.ndarray
    eps_rho: np.ndarray


def tangent_gradient(fields: MadelungFields) -> np.ndarray:
    """``d_j phi - Re<phi|d_j phi> phi``; shape ``(*shape, dim, L)``."""
    phi = fields.phi
    d = np.stack([central_difference(phi, fields.grid, j) for j in range(fields.grid.dim)],
                 axis=-2)
    overlap = np.einsum("...k,...jk->...j", phi.conj(), d)
    return d - overlap.real[..., None] * phi[..., None, :]


def electronic_potential(fields: MadelungFields) -> ElectronicPotential:
    mu = fields.mu
    minv = 1.0 / fields.metric.masses
    t = tangent_gradient(fields)
    # A_j = -i sqrt(mu) <phi|T_j> is real because T_j is tangent
    a = fields.hbar * np.einsum("...k,...jk->...j", fields.phi.conj(), t).imag
    sq = np.sum(np.abs(t) ** 2, axis=-1)
    eps = 0.5 * mu * np.sum(sq * minv, axis=-1) - 0.5 * np.sum(a ** 2 * minv, axis=-1)

    proj = np.einsum("...jk,...k->...j", t.conj(), fields.phi)
    qgt = np.einsum("...jk,...lk->...jl", t.conj(), t) - proj[..., :, None] * proj[..., None, :].conj()
    qgt_trace = 0.5 * mu * np.einsum("...jj,j->...", qgt.real, minv)

    rho = fields.density_matrix()
    eps_rho = np.zeros(fields.D.shape)
    for j in range(fields.grid.dim):
        dr = central_difference(rho, fields.grid, j)
        eps_rho = eps_rho + 0.25 * mu * minv[j] * np.sum(np.abs(dr) ** 2, axis=(-2, -1))
    return ElectronicPotential(eps, qgt, qgt_trace, eps_rho)


def quantum_potential(D, grid: Grid, mu, metric: MassMetric = None, mask=None) -> np.ndarray:
    """``V_Q = -mu div(grad sqrt(D))^# / (2 sqrt(D))`` from second differences.

    Points outside ``mask`` (default: ``D > 0``) are NaN.

    Examples
    --------
    >>> import numpy as np
    >>> from bomdlab.madelung.grid import Grid
    >>> g = Grid.line(2001, -10.0, 10.0)
    >>> x = g.coords[..., 0]
    >>> vq = quantum_potential(np.exp(-x**2 / 2), g, mu=1.0)
    >>> round(float(vq[1000]), 4)   # mu / (4 M sigma^2)
    0.25
    """
    D = np.asarray(D, dtype=float)
    metric = MassMetric.identity(grid.dim) if metric is None else metric
    mask = D > 0 if mask is None else np.asarray(mask, dtype=bool)
    root = np.sqrt(np.clip(D, 0.0, None))
    lap = np.zeros_like(root)
    for j, (h, m) in enumerate(zip(grid.spacing, metric.masses)):
        lap += (_shift(root, j, 1) - 2 * root + _shift(root, j, -1)) / (h * h * m)
    safe = np.where(mask, root, 1.0)
    return np.where(mask, -mu * lap / (2 * safe), np.nan)


def check_fields(fields: MadelungFields, norm_tol=1e-8, phi_tol=1e-10):
    """Validate the normalization invariants of extracted fields."""
    total = float(np.sum(fields.D) * fields.grid.cell)
    if abs(total - 1.0) > norm_tol:
        raise InvalidInputError(f"density integrates to {total:.12g}")
    nrm = np.sum(np.abs(fields.phi[fields.mask]) ** 2, axis=-1)
    if nrm.size and np.max(np.abs(nrm - 1.0)) > phi_tol:
        raise InvalidInputError("electronic factor is not normalized on the mask")
