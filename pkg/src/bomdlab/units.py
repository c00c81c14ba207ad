"""Atomic-unit parameters and their dimensionless counterparts.

Everything downstream works in units built on the average nuclear mass
``M_0``, the Bohr radius and the Hartree energy. The only parameter that
survives the rescaling is ``mu = m_e / M_0``; Planck's constant becomes
``sqrt(mu)`` in units of action.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class PhysicalParams:
    """Molecular parameters in atomic units (masses in electron masses)."""

    nuclear_masses: tuple
    electron_mass: float = 1.0
    bohr_radius: float = 1.0
    hartree_energy: float = 1.0
    # kept for completeness; no dimensionless quantity depends on it
    elementary_charge: float = 1.0

    def __post_init__(self):
        masses = tuple(float(m) for m in np.atleast_1d(self.nuclear_masses))
        object.__setattr__(self, "nuclear_masses", masses)
        if len(masses) < 1:
            raise InvalidInputError("at least one nuclear mass is required")
        for name, value in [
            ("nuclear_masses", min(masses)),
            ("electron_mass", self.electron_mass),
            ("bohr_radius", self.bohr_radius),
            ("hartree_energy", self.hartree_energy),
            ("elementary_charge", self.elementary_charge),
        ]:
            if not np.isfinite(value) or value <= 0:
                raise InvalidInputError(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class DimensionlessParams:
    mu: float
    mass_ratios: tuple
    time_unit: float
    action_unit: float
    mean_mass: float

    @property
    def hbar(self) -> float:
        """Planck's constant in units of ``action_unit``."""
        return float(np.sqrt(self.mu))

    def to_physical_time(self, t):
        return np.asarray(t) * self.time_unit

    def to_dimensionless_time(self, t):
        return np.asarray(t) / self.time_unit


def nondimensionalize(params: PhysicalParams) -> DimensionlessParams:
    """Rescale physical parameters to the average-nuclear-mass unit system.

    >>> d = nondimensionalize(PhysicalParams(nuclear_masses=(1.0, 3.0)))
    >>> d.mu, d.mass_ratios
    (0.5, (0.5, 1.5))
    """
    if not isinstance(params, PhysicalParams):
        raise InvalidInputError("expected PhysicalParams")
    masses = np.array(params.nuclear_masses)
    m0 = float(np.mean(masses))
    return DimensionlessParams(
        mu=params.electron_mass / m0,
        mass_ratios=tuple(float(x) for x in masses / m0),
        time_unit=float(np.sqrt(m0 / params.hartree_energy) * params.bohr_radius),
        action_unit=float(np.sqrt(m0 * params.hartree_energy) * params.bohr_radius),
        mean_mass=m0,
    )


@dataclass(frozen=True)
class MassMetric:
    """Diagonal mass metric ``G = diag(M_1, ..., M_N) (x) Id_d``.

    Vectors (velocities) pair through ``G``; covectors (momenta, gradients)
    through its inverse.
    """

    masses: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if m.ndim != 1 or m.size == 0 or np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise InvalidInputError("metric masses must be a non-empty vector of positive reals")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @classmethod
    def identity(cls, dim=1):
        return cls(np.ones(dim))

    @property
    def dim(self) -> int:
        return self.masses.size

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.masses)

    def lower(self, u):
        """``G u``: vector to covector."""
        return self.masses * np.asarray(u)

    def raise_(self, sigma):
        """``G^{-1} sigma``: covector to vector."""
        return np.asarray(sigma) / self.masses

    def g(self, u, v) -> float:
        return float(np.dot(self.masses * np.asarray(u), np.asarray(v)))

    def g_inv(self, sigma, tau) -> float:
        return float(np.dot(np.asarray(sigma) / self.masses, np.asarray(tau)))

    def norm(self, u) -> float:
        return float(np.sqrt(self.g(u, u)))

    def inv_norm(self, sigma) -> float:
        return float(np.sqrt(self.g_inv(sigma, sigma)))

    def kinetic(self, p) -> float:
        """``||p||^2_{g^-1} / 2``."""
        return 0.5 * self.g_inv(p, p)


def mass_metric(dimless: DimensionlessParams, spatial_dim: int = 1) -> MassMetric:
    """Mass metric for ``N`` nuclei each moving in ``spatial_dim`` dimensions."""
    if int(spatial_dim) != spatial_dim or spatial_dim < 1:
        raise InvalidInputError(f"spatial dimension must be a positive integer, got {spatial_dim}")
    return MassMetric(np.repeat(np.asarray(dimless.mass_ratios, dtype=float), int(spatial_dim)))
