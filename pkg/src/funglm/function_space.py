"""Discrete L2[0, 1] on a uniform midpoint grid.

Functions are stored by their values at ``t_g = (g - 1/2) / T`` and the inner
product is ``<f, g> = (1/T) sum f(t_g) g(t_g)``.  On this grid the cosine
system ``1, sqrt(2) cos(pi t), sqrt(2) cos(2 pi t), ...`` is exactly
orthonormal (it is the DCT-II basis), so no quadrature error enters any of the
bound checks built on top of it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    T: int

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"grid size must be a positive integer, got {self.T!r}")

    @cached_property
    def nodes(self) -> np.ndarray:
        t = (np.arange(self.T) + 0.5) / self.T
        t.setflags(write=False)
        return t

    @property
    def weight(self) -> float:
        return 1.0 / self.T


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.T,):
            raise ValueError(f"expected {self.grid.T} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, c: float = 1.0) -> "GridFunction":
        return cls(grid, np.full(grid.T, float(c)))

    @classmethod
    def zero(cls, grid: Grid) -> "GridFunction":
        return cls.constant(grid, 0.0)

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self)))

    def _check(self, other: "GridFunction"):
        if self.grid != other.grid:
            raise GridMismatchError(f"grid mismatch: T={self.grid.T} vs T={other.grid.T}")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, self.values - other.values)

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, float(c) * self.values)

    __rmul__ = __mul__


def inner(f: GridFunction, g: GridFunction) -> float:
    """Discrete L2 inner product ``(1/T) sum f(t_g) g(t_g)``."""
    if f.grid != g.grid:
        raise GridMismatchError(f"grid mismatch: T={f.grid.T} vs T={g.grid.T}")
    return float(np.dot(f.values, g.values)) / f.grid.T


@dataclass(frozen=True, eq=False)
class BasisSet:
    """An ordered orthonormal system, stored as a ``(J, T)`` matrix of values."""

    grid: Grid
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = _frozen(self.matrix)
        if mat.ndim != 2 or mat.shape[1] != self.grid.T:
            raise ValueError(f"basis matrix must have shape (J, {self.grid.T}), got {mat.shape}")
        object.__setattr__(self, "matrix", mat)

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def functions(self) -> list[GridFunction]:
        return [GridFunction(self.grid, row) for row in self.matrix]

    def __getitem__(self, j: int) -> GridFunction:
        """The ``j``-th function, zero-based (``basis[0]`` is phi_1)."""
        return GridFunction(self.grid, self.matrix[j])

    def gram(self) -> np.ndarray:
        return self.matrix @ self.matrix.T / self.grid.T

    def coefficients(self, values) -> np.ndarray:
        """Inner products of each basis function with ``values``.

        ``values`` may be a single function (shape ``(T,)``) or a stack of
        functions (shape ``(n, T)``); the result has shape ``(J,)`` or ``(n, J)``.
        """
        vals = values.values if isinstance(values, GridFunction) else np.asarray(values, dtype=float)
        return vals @ self.matrix.T / self.grid.T

    def synthesize(self, coefs) -> GridFunction:
        coefs = np.asarray(coefs, dtype=float)
        return GridFunction(self.grid, coefs @ self.matrix[: coefs.shape[0]])


def cosine_basis(T: int, J: int) -> BasisSet:
    """``phi_1 = 1`` and ``phi_{j+1}(t) = sqrt(2) cos(j pi t)`` for ``j < J``."""
    if not 1 <= J <= T:
        raise ValueError(f"need 1 <= J <= T for an orthonormal cosine system, got J={J}, T={T}")
    grid = Grid(T)
    j = np.arange(J)[:, None]
    mat = np.sqrt(2.0) * np.cos(np.pi * j * grid.nodes[None, :])
    mat[0] = 1.0
    return BasisSet(grid, mat)


def write_functions_csv(path, functions: Mapping[str, GridFunction]) -> Path:
    """Write grid functions as CSV columns next to the node column ``t``."""
    path = Path(path)
    items = list(functions.items())
    if not items:
        raise ValueError("nothing to write")
    grid = items[0][1].grid
    for name, f in items:
        if f.grid != grid:
            raise GridMismatchError(f"column {name!r} is on a different grid")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *[name for name, _ in items]])
        for g, t in enumerate(grid.nodes):
            w.writerow([repr(float(t)), *[repr(float(f.values[g])) for _, f in items]])
    return path


def read_functions_csv(path) -> dict[str, GridFunction]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    grid = Grid(body.shape[0])
    if not np.allclose(body[:, 0], grid.nodes, rtol=0, atol=1e-15):
        raise ValueError("t column is not a midpoint grid")
    return {name: GridFunction(grid, body[:, c]) for c, name in enumerate(header) if c > 0}


def stack(functions: Iterable[GridFunction]) -> np.ndarray:
    fs = list(functions)
    if any(f.grid != fs[0].grid for f in fs):
        raise GridMismatchError("cannot stack functions on different grids")
    return np.vstack([f.values for f in fs])
