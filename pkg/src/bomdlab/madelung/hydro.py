"""Residuals of the nuclear hydrodynamic equations evaluated on TDSE snapshots.

With ``u`` the hydrodynamic velocity, ``rho = phi phi^dagger`` and ``V_Q``
the quantum potential, the three equations diagnosed are

    M_k (d_t + u.grad) u_k = -d_k V_Q - <rho, d_k H_e>
                             - (mu / 2D) sum_j d_j(D tr(d_j rho d_k rho) / M_j)
    i sqrt(mu) (d_t + u.grad) rho = [H_e - (mu / 2D) sum_j d_j(D d_j rho / M_j), rho]
    d_t D + div(D u) = 0

Time derivatives are central differences over neighbouring snapshots, space
derivatives are central differences, so the residuals of an exact TDSE
solution vanish at second order in both steps.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateFieldError, InvalidInputError
from .fields import (MadelungFields, _shift, central_difference, quantum_potential,
                     velocity_field, xf_extract)
from .grid import GridWavefunction

MASK_FRACTION = 1e-6
SPACING_RTOL = 1e-8


@dataclass(frozen=True)
class HydroResiduals:
    """Density-weighted RMS residuals at each interior snapshot time.

    ``limit_continuity`` is the transport equation with ``G^-1 grad S`` in place
    of ``u``; it only closes as ``mu -> 0`` and depends on the gauge of ``phi``.
    """

    t: np.ndarray
    momentum: np.ndarray
    electronic: np.ndarray
    continuity: np.ndarray
    limit_continuity: np.ndarray

    def worst(self) -> dict:
        return {"momentum": float(np.max(self.momentum)),
                "electronic": float(np.max(self.electronic)),
                "continuity": float(np.max(self.continuity))}


def _as_fields(snapshots):
    out = [s if isinstance(s, MadelungFields) else xf_extract(s) for s in snapshots]
    for s in snapshots:
        if not isinstance(s, (MadelungFields, GridWavefunction)):
            raise InvalidInputError("snapshots must be GridWavefunction or MadelungFields")
    return out


def _time_step(fields):
    t = np.array([f.t for f in fields])
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if not dt > 0 or np.max(np.abs(steps - dt)) > SPACING_RTOL * dt:
        raise InvalidInputError("snapshots must be equally spaced in increasing time")
    return dt


def _hamiltonian_tables(grid, model):
    pts = grid.coords.reshape(-1, grid.dim)
    h = np.array([model.hamiltonian(r) for r in pts])
    dh = np.array([model.hamiltonian_gradient(r) for r in pts])
    L = h.shape[-1]
    return h.reshape(grid.shape + (L, L)), dh.reshape(grid.shape + (grid.dim, L, L))


def _weighted_div(D, f, grid, axis, mass):
    # d_j(D d_j f) / M_j with D averaged onto the half points
    h = grid.spacing[axis]
    ext = (slice(None),) * grid.dim + (None,) * (f.ndim - grid.dim)
    dp = 0.5 * (D + _shift(D, axis, 1))[ext]
    dm = 0.5 * (D + _shift(D, axis, -1))[ext]
    return (dp * (_shift(f, axis, 1) - f) - dm * (f - _shift(f, axis, -1))) / (h * h * mass)


def _rms(residual, D, valid):
    sq = np.abs(residual) ** 2
    if sq.ndim > D.ndim:
        sq = np.sum(sq.reshape(D.shape + (-1,)), axis=-1)
    w = np.where(valid, D, 0.0)
    return float(np.sqrt(np.sum(w * np.where(valid, sq, 0.0)) / np.sum(w)))


def _residuals_at(prev, cur, nxt, dt, h_e, dh_e, mask_fraction):
    grid, mu, metric = cur.grid, cur.mu, cur.metric
    masses = metric.masses
    dim = grid.dim
    D = cur.D
    u_prev, u, u_next = velocity_field(prev), velocity_field(cur), velocity_field(nxt)
    rho_prev, rho, rho_next = prev.density_matrix(), cur.density_matrix(), nxt.density_matrix()
    hbar = np.sqrt(mu)

    valid = cur.mask & (D > mask_fraction * D.max())
    safe_d = np.where(valid, D, 1.0)

    # continuity with the full velocity and with grad S alone
    d_t = (nxt.D - prev.D) / (2 * dt)
    flux = D[..., None] * u
    r_cont = d_t + sum(central_difference(flux[..., j], grid, j) for j in range(dim))
    grad_s = np.stack([central_difference(cur.S, grid, j) for j in range(dim)], axis=-1)
    flux_s = D[..., None] * metric.raise_(grad_s)
    r_limit = d_t + sum(central_difference(flux_s[..., j], grid, j) for j in range(dim))

    # momentum balance, one covector component per axis
    drho = [central_difference(rho, grid, j) for j in range(dim)]
    du = [central_difference(u, grid, j) for j in range(dim)]
    vq = quantum_potential(D, grid, mu, metric, mask=cur.mask)
    force_e = np.einsum("...ab,...kba->...k", rho, dh_e).real
    r_mom = np.empty(D.shape + (dim,))
    for k in range(dim):
        accel = (u_next[..., k] - u_prev[..., k]) / (2 * dt)
        accel = accel + sum(u[..., j] * du[j][..., k] for j in range(dim))
        stress = 0.0
        for j in range(dim):
            inner = np.einsum("...ab,...ba->...", drho[j], drho[k]).real
            stress = stress + central_difference(D * inner / masses[j], grid, j)
        r_mom[..., k] = (masses[k] * accel + central_difference(vq, grid, k) + force_e[..., k]
                         + 0.5 * mu * stress / safe_d)

    # electronic equation in the frame moving with u
    transport = (rho_next - rho_prev) / (2 * dt)
    transport = transport + sum(u[..., j, None, None] * drho[j] for j in range(dim))
    diffusion = sum(_weighted_div(D, rho, grid, j, masses[j]) for j in range(dim))
    h_eff = h_e - 0.5 * mu * diffusion / safe_d[..., None, None]
    r_rho = 1j * hbar * transport - (h_eff @ rho - rho @ h_eff)

    finite = (np.all(np.isfinite(r_mom), axis=-1) & np.isfinite(r_cont)
              & np.all(np.isfinite(r_rho), axis=(-2, -1)))
    valid = valid & finite
    if not valid.any():
        raise DegenerateFieldError("no grid point is valid for the hydrodynamic residuals")
    finite_limit = valid & np.isfinite(r_limit)
    return (_rms(r_mom, D, valid), _rms(r_rho, D, valid), _rms(r_cont, D, valid),
            _rms(r_limit, D, finite_limit))


def hydro_residuals(snapshots, model, mask_fraction=MASK_FRACTION) -> HydroResiduals:
    """Hydrodynamic residual norms for consecutive, equally spaced snapshots.

    Residuals are weighted by ``D`` and restricted to points where
    ``D > mask_fraction * max(D)`` and every stencil stays on the extraction mask.
    """
    if len(snapshots) < 3:
        raise InvalidInputError("at least three consecutive snapshots are needed")
    fields = _as_fields(snapshots)
    dt = _time_step(fields)
    h_e, dh_e = _hamiltonian_tables(fields[0].grid, model)
    rows = [_residuals_at(fields[n - 1], fields[n], fields[n + 1], dt, h_e, dh_e, mask_fraction)
            for n in range(1, len(fields) - 1)]
    rows = np.array(rows)
    t = np.array([f.t for f in fields[1:-1]])
    return HydroResiduals(t, rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3])
