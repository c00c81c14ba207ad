"""Periodic nuclear grids and wavefunctions sampled on them."""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ..units import MassMetric

NORM_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid; axis ``j`` has ``shape[j]`` points on ``[lower_j, upper_j)``."""

    shape: tuple
    lower: tuple
    upper: tuple

    def __post_init__(self):
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        lower = tuple(float(x) for x in np.atleast_1d(self.lower))
        upper = tuple(float(x) for x in np.atleast_1d(self.upper))
        if not (len(shape) == len(lower) == len(upper)) or len(shape) not in (1, 2):
            raise InvalidInputError("grids are one- or two-dimensional with matching bounds")
        if any(n < 4 for n in shape) or any(b <= a for a, b in zip(lower, upper)):
            raise InvalidInputError("each axis needs at least 4 points and upper > lower")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def line(cls, points, lower, upper):
        return cls((points,), (lower,), (upper,))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / n for a, b, n in zip(self.lower, self.upper, self.shape)])

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def axes(self):
        return [a + h * np.arange(n) for a, h, n in zip(self.lower, self.spacing, self.shape)]

    @property
    def coords(self) -> np.ndarray:
        """Point coordinates, shape ``(*shape, dim)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @property
    def wavenumbers(self):
        """Angular wavenumbers per axis in FFT order."""
        return [2 * np.pi * np.fft.fftfreq(n, d=h) for n, h in zip(self.shape, self.spacing)]

    def kinetic_symbol(self, metric: MassMetric) -> np.ndarray:
        """``|kappa|^2_{g^-1}`` on the FFT grid."""
        mesh = np.meshgrid(*self.wavenumbers, indexing="ij")
        return sum(k ** 2 / m for k, m in zip(mesh, metric.masses))

    def refined(self):
        return Grid(tuple(2 * n for n in self.shape), self.lower, self.upper)


@dataclass(frozen=True)
class GridWavefunction:
    """Molecular wavefunction ``Psi[i..., k]`` on a nuclear grid, ``k`` the electronic level."""

    grid: Grid
    values: np.ndarray
    mu: float
    metric: MassMetric = None
    t: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values)
        v = v.astype(np.result_type(v.dtype, np.complex128), copy=True)
        if v.ndim != self.grid.dim + 1 or v.shape[:-1] != self.grid.shape:
            raise InvalidInputError(f"values must have shape {self.grid.shape + ('L',)}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("wavefunction has non-finite values")
        if not self.mu > 0:
            raise InvalidInputError("mu must be positive")
        metric = MassMetric.identity(self.grid.dim) if self.metric is None else self.metric
        if metric.dim != self.grid.dim:
            raise InvalidInputError("metric dimension must match the grid dimension")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "metric", metric)
        norm = self.norm()
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidInputError(f"wavefunction is not normalized (norm^2 = {norm:.12g})")

    @classmethod
    def normalized(cls, grid, values, mu, metric=None, t=0.0):
        v = np.asarray(values, dtype=complex)
        n2 = float(np.sum(np.abs(v) ** 2) * grid.cell)
        if not n2 > 0:
            raise InvalidInputError("cannot normalize a zero wavefunction")
        return cls(grid, v / np.sqrt(n2), mu, metric, t)

    @property
    def levels(self) -> int:
        return self.values.shape[-1]

    def norm(self) -> float:
        """``sum_i sum_k |Psi_ik|^2 dr^d``."""
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell)

    def density(self) -> np.ndarray:
        return np.sum(np.abs(self.as_complex128()) ** 2, axis=-1)

    def as_complex128(self) -> np.ndarray:
        """Values in double precision (the propagator may carry extended precision)."""
        return np.asarray(self.values, dtype=np.complex128)

    def with_values(self, values, t):
        new = object.__new__(GridWavefunction)
        for name, val in (("grid", self.grid), ("values", values), ("mu", self.mu),
                          ("metric", self.metric), ("t", t)):
            object.__setattr__(new, name, val)
        return new
