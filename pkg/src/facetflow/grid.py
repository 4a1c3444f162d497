"""Periodic uniform grids on the unit n-torus and their basic calculus.

Holds the discrete stand-ins for scalar fields and vector fields, the
wrap-around metric, forward/backward difference calculus (exact adjoints),
grey-scale morphology (erosion/dilation over grid balls) and mollification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the unit torus, n in {1, 2}."""

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.n}")
        if self.N < 8:
            raise ValueError(f"resolution must be >= 8, got {self.N}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (*shape, n)."""
        axes = [np.arange(self.N) * self.h] * self.n
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def ball_radius_cells(self, radius: float) -> int:
        return int(np.floor(radius / self.h + 1e-9))

    def ball_footprint(self, radius: float) -> np.ndarray:
        """Closed grid ball of the graded family, as a boolean footprint.

        The radius-k*h ball is the k-fold Minkowski sum of the elementary
        one-cell ball, so that ball(j*h) + ball(k*h) = ball((j+k)*h) holds
        exactly and the morphology algebra below is exact on masks.  In 1D
        this coincides with the Euclidean grid ball.
        """
        k = self.ball_radius_cells(radius)
        g = np.arange(-k, k + 1)
        if self.n == 1:
            return np.abs(g) <= k
        mesh = np.meshgrid(*([g] * self.n), indexing="ij")
        return sum(np.abs(m) for m in mesh) <= k

    def euclidean_ball_offsets(self, radius: float) -> np.ndarray:
        """Integer offsets with torus distance <= radius, shape (m, n)."""
        k = int(np.ceil(radius / self.h + 1e-9))
        k = min(k, self.N // 2)
        g = np.arange(-k, k + 1)
        mesh = np.meshgrid(*([g] * self.n), indexing="ij")
        d2 = sum(m.astype(float) ** 2 for m in mesh) * self.h**2
        sel = d2 <= radius**2 + 1e-12
        return np.stack([m[sel] for m in mesh], axis=-1)


def torus_distance(x, y) -> float:
    """Distance on the unit torus: min over integer shifts."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d = np.abs(x - y) % 1.0
    d = np.minimum(d, 1.0 - d)
    return float(np.sqrt(np.sum(d**2)))


@dataclass
class GridFunction:
    """Real scalar field on a grid, stored on one fundamental domain."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridFunction values must be finite")

    @classmethod
    def from_function(cls, grid: Grid, f) -> "GridFunction":
        c = grid.coords()
        vals = f(*(c[..., i] for i in range(grid.n)))
        return cls(grid, np.broadcast_to(np.asarray(vals, float), grid.shape).copy())

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.shape, float(c)))

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def mean(self) -> float:
        return float(np.mean(self.values))


@dataclass
class GridVectorField:
    """n-component vector field on a grid."""

    grid: Grid
    values: np.ndarray  # shape (*grid.shape, n)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape + (self.grid.n,):
            raise GridMismatchError(
                f"values shape {self.values.shape} != {self.grid.shape + (self.grid.n,)}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridVectorField values must be finite")

    @classmethod
    def zero(cls, grid: Grid) -> "GridVectorField":
        return cls(grid, np.zeros(grid.shape + (grid.n,)))


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("operands live on different grids")


def gradient_fd(u: GridFunction) -> GridVectorField:
    """Forward-difference gradient (adjoint to divergence_fd)."""
    h = u.grid.h
    comps = [(np.roll(u.values, -1, axis=i) - u.values) / h for i in range(u.grid.n)]
    return GridVectorField(u.grid, np.stack(comps, axis=-1))


def divergence_fd(z: GridVectorField) -> GridFunction:
    """Backward-difference divergence; exact negative adjoint of gradient_fd."""
    h = z.grid.h
    out = np.zeros(z.grid.shape)
    for i in range(z.grid.n):
        zi = z.values[..., i]
        out += (zi - np.roll(zi, 1, axis=i)) / h
    return GridFunction(z.grid, out)


def gradient_centered(u: GridFunction) -> GridVectorField:
    h = u.grid.h
    comps = [(np.roll(u.values, -1, axis=i) - np.roll(u.values, 1, axis=i)) / (2 * h)
             for i in range(u.grid.n)]
    return GridVectorField(u.grid, np.stack(comps, axis=-1))


def hessian_centered(u: GridFunction) -> np.ndarray:
    """Centered second differences, shape (*shape, n, n)."""
    h = u.grid.h
    n = u.grid.n
    v = u.values
    H = np.zeros(u.grid.shape + (n, n))
    for i in range(n):
        H[..., i, i] = (np.roll(v, -1, axis=i) - 2 * v + np.roll(v, 1, axis=i)) / h**2
    for i in range(n):
        for j in range(i + 1, n):
            cross = (np.roll(np.roll(v, -1, axis=i), -1, axis=j)
                     + np.roll(np.roll(v, 1, axis=i), 1, axis=j)
                     - np.roll(np.roll(v, -1, axis=i), 1, axis=j)
                     - np.roll(np.roll(v, 1, axis=i), -1, axis=j)) / (4 * h**2)
            H[..., i, j] = cross
            H[..., j, i] = cross
    return H


def erode(u: GridFunction, eta: float) -> GridFunction:
    """Pointwise infimum of u over the closed grid ball of radius eta."""
    if eta < 0:
        raise ValueError(f"erosion radius must be nonnegative, got {eta}")
    fp = u.grid.ball_footprint(eta)
    if fp.size == 1:
        return u.copy()
    out = ndimage.grey_erosion(u.values, footprint=fp, mode="wrap")
    return GridFunction(u.grid, out)


def dilate(u: GridFunction, eta: float) -> GridFunction:
    """Pointwise supremum of u over the closed grid ball of radius eta."""
    if eta < 0:
        raise ValueError(f"dilation radius must be nonnegative, got {eta}")
    fp = u.grid.ball_footprint(eta)
    if fp.size == 1:
        return u.copy()
    out = ndimage.grey_dilation(u.values, footprint=fp, mode="wrap")
    return GridFunction(u.grid, out)


def mollify(u: GridFunction, radius: float) -> GridFunction:
    """Smooth u by a normalized bump-weighted average over a Euclidean ball."""
    if radius <= u.grid.h / 2:
        return u.copy()
    k = max(1, int(np.floor(radius / u.grid.h + 1e-9)))
    g = np.arange(-k, k + 1, dtype=float)
    mesh = np.meshgrid(*([g] * u.grid.n), indexing="ij")
    r2 = sum(m**2 for m in mesh) / (k + 0.5) ** 2
    w = np.where(r2 < 1.0, np.exp(-1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
    w /= w.sum()
    out = ndimage.correlate(u.values, w, mode="wrap")
    return GridFunction(u.grid, out)


def lipschitz_constant(u: GridFunction) -> float:
    """Max magnitude of the discrete (forward-difference) gradient."""
    g = gradient_fd(u)
    return float(np.max(np.sqrt(np.sum(g.values**2, axis=-1))))


def inner(u: GridFunction, v: GridFunction) -> float:
    """L2 inner product with the cell volume weight h^n."""
    _check_same_grid(u, v)
    return float(np.sum(u.values * v.values)) * u.grid.h**u.grid.n


def inner_vec(z: GridVectorField, w: GridVectorField) -> float:
    _check_same_grid(z, w)
    return float(np.sum(z.values * w.values)) * z.grid.h**z.grid.n


def norm2(u: GridFunction) -> float:
    return float(np.sqrt(max(inner(u, u), 0.0)))
