"""Gaussian smoothing kernels and tensor-product trapezoid quadrature.

The integrands met in the particle closures are products and ratios of
Gaussians, smooth and exponentially localized, so a uniform trapezoid rule
on a window a few widths past the outermost particle is spectrally accurate.
Every quadrature can verify itself by halving the spacing.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, QuadratureError

DENOMINATOR_FLOOR = 1e-300


@dataclass(frozen=True)
class GaussianKernel:
    """Isotropic normalized Gaussian ``(2 pi a^2)^(-d/2) exp(-|x|^2 / 2a^2)``."""

    alpha: float
    dim: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidInputError("kernel width alpha must be positive")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError("kernel dimension must be a positive integer")

    @property
    def norm(self) -> float:
        return (2.0 * np.pi * self.alpha ** 2) ** (-0.5 * self.dim)

    def evaluate(self, x):
        """``x`` has trailing axis of length ``dim``."""
        x = np.asarray(x, dtype=float)
        return self.norm * np.exp(-0.5 * np.sum(x * x, axis=-1) / self.alpha ** 2)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return -(x / self.alpha ** 2) * self.evaluate(x)[..., None]

    def hessian_dot(self, x, v):
        """``Hess K(x) @ v`` for matching leading axes of ``x`` and ``v``."""
        x = np.asarray(x, dtype=float)
        a2 = self.alpha ** 2
        xv = np.sum(x * v, axis=-1)[..., None]
        return (x * xv / a2 ** 2 - v / a2) * self.evaluate(x)[..., None]


@dataclass(frozen=True)
class PhaseSpaceKernel:
    """Product of Gaussians in position (width ``alpha_q``) and momentum (``alpha_p``)."""

    alpha_q: float
    alpha_p: float
    dim: int = 1

    def __post_init__(self):
        if not (self.alpha_q > 0 and self.alpha_p > 0):
            raise InvalidInputError("kernel widths must be positive")

    @property
    def widths(self):
        return np.concatenate([np.full(self.dim, self.alpha_q), np.full(self.dim, self.alpha_p)])

    def evaluate(self, z):
        """``z`` has trailing axis ``2*dim`` ordered ``(q..., p...)``."""
        z = np.asarray(z, dtype=float)
        s = self.widths
        norm = np.prod(1.0 / np.sqrt(2.0 * np.pi * s ** 2))
        return norm * np.exp(-0.5 * np.sum((z / s) ** 2, axis=-1))

    def gradient(self, z):
        z = np.asarray(z, dtype=float)
        return -(z / self.widths ** 2) * self.evaluate(z)[..., None]

    def hessian(self, z):
        z = np.asarray(z, dtype=float)
        s2 = self.widths ** 2
        y = z / s2
        outer = y[..., :, None] * y[..., None, :]
        return (outer - np.diag(1.0 / s2)) * self.evaluate(z)[..., None, None]


@dataclass(frozen=True)
class TensorGrid:
    """Uniform tensor-product grid with trapezoid weights."""

    axes: tuple

    @classmethod
    def covering(cls, lo, hi, spacing):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        spacing = np.broadcast_to(np.asarray(spacing, dtype=float), lo.shape)
        axes = []
        for a, b, h in zip(lo, hi, spacing):
            n = int(np.ceil((b - a) / h)) + 1
            axes.append(np.linspace(a, b, max(n, 2)))
        return cls(tuple(axes))

    @property
    def spacing(self):
        return np.array([ax[1] - ax[0] for ax in self.axes])

    @property
    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    @property
    def weights(self):
        w = np.ones(())
        for ax in self.axes:
            wa = np.full(ax.size, ax[1] - ax[0])
            wa[0] *= 0.5
            wa[-1] *= 0.5
            w = np.multiply.outer(w, wa)
        return w.reshape(-1)

    def refined(self):
        return TensorGrid(tuple(np.linspace(ax[0], ax[-1], 2 * ax.size - 1) for ax in self.axes))


def window_grid(centers, widths, spacing_fraction=0.125, window=6.0):
    """Grid over ``[min c - window*w, max c + window*w]`` per axis with spacing ``<= fraction*w``."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    widths = np.broadcast_to(np.asarray(widths, dtype=float), centers.shape[1:])
    lo = centers.min(axis=0) - window * widths
    hi = centers.max(axis=0) + window * widths
    return TensorGrid.covering(lo, hi, spacing_fraction * widths)


def self_checked(evaluate, grid, rtol=1e-6, what="quadrature", scales=None):
    """Evaluate ``evaluate(grid)`` and verify it against the refined grid.

    ``evaluate`` may return an array or a tuple of arrays. Returns the value on
    ``grid``; raises :class:`QuadratureError` if halving the spacing changes
    any array by more than ``rtol`` relative to its scale. ``scales`` maps the
    refined result to one scale per array; the default is the largest entry,
    which is too strict for arrays that vanish up to round-off.
    """
    coarse = evaluate(grid)
    fine = evaluate(grid.refined())
    single = not isinstance(coarse, tuple)
    if single:
        coarse, fine = (coarse,), (fine,)
    if scales is None:
        scales = tuple(np.max(np.abs(f)) for f in fine)
    else:
        scales = scales(*fine)
    for c, f, scale in zip(coarse, fine, scales):
        scale = max(scale, np.finfo(float).tiny)
        change = np.max(np.abs(np.asarray(c) - np.asarray(f))) / scale
        if not change <= rtol:
            raise QuadratureError(f"{what} not converged: relative change {change:.3e} > "
                                  f"{rtol:.1e} under spacing halving")
    return coarse[0] if single else coarse
