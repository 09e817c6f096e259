"""Uniform periodic grids on the unit torus, node fields and difference stencils."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PeriodicGrid:
    dim: int
    N: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.N < 8:
            raise ValueError("need at least 8 nodes per dimension")

    @property
    def dx(self) -> float:
        return 1.0 / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    def axis(self) -> np.ndarray:
        return np.arange(self.N) / self.N

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``grid.shape + (dim,)``."""
        ax = self.axis()
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def nearest_index(self, z) -> tuple[int, ...]:
        """Index of the node nearest ``z``; exact ties go to the smaller index."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.size != self.dim:
            raise ValueError(f"point must have {self.dim} components")
        return tuple(int(math.ceil(zi * self.N - 0.5)) % self.N for zi in z)

    def field(self, values) -> "Field":
        return Field(self, np.asarray(values, dtype=float).reshape(self.shape))

    def sample(self, fn) -> "Field":
        """Evaluate ``fn(x)`` with ``x`` of shape ``grid.shape + (dim,)``."""
        return self.field(fn(self.coords()))

    def constant(self, c: float) -> "Field":
        return Field(self, np.full(self.shape, float(c)))


@dataclass(frozen=True, eq=False)
class Field:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __add__(self, other):
        return Field(self.grid, self.values + np.asarray(other))

    def __sub__(self, other):
        return Field(self.grid, self.values - np.asarray(other))

    def __mul__(self, other):
        return Field(self.grid, self.values * np.asarray(other))

    __rmul__ = __mul__

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def at(self, z) -> float:
        return float(self.values[self.grid.nearest_index(z)])

    def to_csv(self, path) -> Path:
        return write_field_csv(path, self)


def _vals(f) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=float)


def _grid_of(f, dx):
    if isinstance(f, Field):
        return f.grid, f.grid.dx
    if dx is None:
        dx = 1.0 / np.asarray(f).shape[0]
    return None, dx


def central_gradient(f, dx: float | None = None) -> list:
    """Centered differences with periodic wraparound, one component per axis."""
    grid, dx = _grid_of(f, dx)
    v = _vals(f)
    comps = [(np.roll(v, -1, axis=i) - np.roll(v, 1, axis=i)) / (2.0 * dx) for i in range(v.ndim)]
    return [Field(grid, c) for c in comps] if grid is not None else comps


def laplacian(f, dx: float | None = None):
    grid, dx = _grid_of(f, dx)
    v = _vals(f)
    out = np.zeros_like(v)
    for i in range(v.ndim):
        out += np.roll(v, -1, axis=i) + np.roll(v, 1, axis=i)
    out -= 2.0 * v.ndim * v
    out /= dx * dx
    return Field(grid, out) if grid is not None else out


def hessian(f, dx: float | None = None) -> np.ndarray:
    """Second-difference Hessian, shape ``values.shape + (n, n)``.

    Diagonal entries use the 3-point stencil; the mixed entry in 2-D uses the
    centered 4-point stencil.
    """
    _, dx = _grid_of(f, dx)
    v = _vals(f)
    n = v.ndim
    H = np.empty(v.shape + (n, n))
    for i in range(n):
        H[..., i, i] = (np.roll(v, -1, axis=i) - 2.0 * v + np.roll(v, 1, axis=i)) / (dx * dx)
    if n == 2:
        pp = np.roll(np.roll(v, -1, 0), -1, 1)
        mm = np.roll(np.roll(v, 1, 0), 1, 1)
        pm = np.roll(np.roll(v, -1, 0), 1, 1)
        mp = np.roll(np.roll(v, 1, 0), -1, 1)
        H[..., 0, 1] = H[..., 1, 0] = (pp - pm - mp + mm) / (4.0 * dx * dx)
    return H


def quadrature(f, dx: float | None = None) -> float:
    _, dx = _grid_of(f, dx)
    v = _vals(f)
    return float(np.sum(v) * dx**v.ndim)


def delta_field(grid: PeriodicGrid, z) -> Field:
    """Unit-mass grid delta: ``N^n`` at the node nearest ``z``."""
    vals = np.zeros(grid.shape)
    vals[grid.nearest_index(z)] = float(grid.N**grid.dim)
    return Field(grid, vals)


def smeared_delta(grid: PeriodicGrid, z, width: float) -> Field:
    """Periodic Gaussian bump of unit discrete mass (for smoothness studies)."""
    x = grid.coords()
    d = x - np.asarray(z, dtype=float).reshape((1,) * grid.dim + (grid.dim,))
    d -= np.round(d)
    w = np.exp(-0.5 * np.sum(d * d, axis=-1) / width**2)
    return Field(grid, w / (np.sum(w) * grid.cell_volume))


def write_field_csv(path, f: Field) -> Path:
    path = Path(path)
    grid = f.grid
    coords = grid.coords().reshape(-1, grid.dim)
    idx = np.array(np.unravel_index(np.arange(f.values.size), grid.shape)).T
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"i{d}" for d in range(grid.dim)] + [f"x{d}" for d in range(grid.dim)] + ["value"])
        for ij, x, val in zip(idx, coords, f.values.ravel()):
            w.writerow([*ij.tolist(), *(repr(float(a)) for a in x), repr(float(val))])
    return path
