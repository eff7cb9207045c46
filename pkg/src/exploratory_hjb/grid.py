"""Uniform truncated grids, scalar fields and finite-difference stencils.

Boundary closure is homogeneous Neumann: the ghost value beyond a boundary
node mirrors the first interior neighbour, ``v[-1] := v[1]``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class GridMismatchError(ValueError):
    """Two objects that must share a grid (or bin layout) do not."""


@dataclass(frozen=True)
class Grid:
    """Tensor grid on ``[-L, L]^d`` with ``n`` nodes per axis."""

    dim: int
    halfwidth: float
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only d in {1, 2} is supported")
        if self.halfwidth <= 0:
            raise ValueError("halfwidth must be positive")
        if self.n < 16:
            raise ValueError("need at least 16 points per axis")

    @property
    def h(self) -> float:
        return 2.0 * self.halfwidth / (self.n - 1)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def axis(self) -> np.ndarray:
        return -self.halfwidth + np.arange(self.n) * self.h

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis] * self.dim), indexing="ij")

    def points(self) -> np.ndarray:
        """Node coordinates as an ``(n^d, d)`` array in C order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(m * m for m in self.mesh()))

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.dim] = True
        return mask

    def node_coords(self, node) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(node, dtype=int))
        return -self.halfwidth + idx * self.h

    def refined(self) -> "Grid":
        """Same box, spacing halved."""
        return Grid(self.dim, self.halfwidth, 2 * self.n - 1)

    def doubled(self) -> "Grid":
        """Box twice as wide, same spacing."""
        return Grid(self.dim, 2.0 * self.halfwidth, 2 * self.n - 1)

    def compatible(self, other: "Grid") -> bool:
        return (self.dim, self.n) == (other.dim, other.n) and self.halfwidth == other.halfwidth


@dataclass
class ScalarField:
    """Values on the nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)

    def _check(self, other):
        if isinstance(other, ScalarField):
            if not self.grid.compatible(other.grid):
                raise GridMismatchError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._check(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._check(other))

    def scale(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, c * self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def at(self, node) -> float:
        return float(self.values[_index(node, self.grid)])

    def to_csv(self, path, name: str = "value") -> None:
        write_field_csv(path, self.grid, {name: self.values})

    @classmethod
    def from_csv(cls, path, column: str = "value") -> "ScalarField":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        coords = [k for k in rows[0] if k.startswith("x_")]
        dim = len(coords)
        first = np.array([float(r["x_1"]) for r in rows])
        n = round(len(rows) ** (1.0 / dim))
        grid = Grid(dim, float(-first.min()), n)
        return cls(grid, np.array([float(r[column]) for r in rows]))


def write_field_csv(path, grid: Grid, columns: dict) -> None:
    """One row per node: ``x_1..x_d`` followed by the named columns."""
    pts = grid.points()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [f"x_{k + 1}" for k in range(grid.dim)] + list(columns)
    writer.writerow(header)
    flat = [np.asarray(v).reshape(-1) for v in columns.values()]
    for i, p in enumerate(pts):
        writer.writerow([repr(float(c)) for c in p] + [repr(float(col[i])) for col in flat])
    Path(path).write_text(buf.getvalue())


def _index(node, grid: Grid) -> tuple:
    idx = tuple(np.atleast_1d(np.asarray(node, dtype=int)).tolist())
    if len(idx) != grid.dim:
        raise IndexError(f"node {node} does not address a {grid.dim}-d grid")
    return idx


# ---------------------------------------------------------------------------
# stencils

def fd_gradient(field: ScalarField, node, drift) -> np.ndarray:
    """Upwind first differences at one node.

    ``drift`` is the coefficient ``c`` of an advection term ``c . grad v``
    (for the temperature-control equations ``c = grad f``).  Per axis:
    ``c > 0`` takes the backward difference, ``c < 0`` the forward one and
    ``c == 0`` the central one.  On a boundary node the only available
    one-sided (inward) difference is used.
    """
    grid = field.grid
    idx = _index(node, grid)
    drift = np.broadcast_to(np.asarray(drift, dtype=float), (grid.dim,))
    v, h, n = field.values, grid.h, grid.n
    out = np.empty(grid.dim)
    for k in range(grid.dim):
        i = idx[k]

        def val(j):
            shifted = list(idx)
            shifted[k] = j
            return v[tuple(shifted)]

        if i == 0:
            out[k] = (val(1) - val(0)) / h
        elif i == n - 1:
            out[k] = (val(n - 1) - val(n - 2)) / h
        elif drift[k] > 0:
            out[k] = (val(i) - val(i - 1)) / h
        elif drift[k] < 0:
            out[k] = (val(i + 1) - val(i)) / h
        else:
            out[k] = (val(i + 1) - val(i - 1)) / (2.0 * h)
    return out


def fd_laplacian(field: ScalarField, node) -> float:
    """Second central differences summed over axes, Neumann ghosts at the boundary."""
    return float(laplacian(field.values, field.grid.h)[_index(node, field.grid)])


def _pad_mirror(values: np.ndarray) -> np.ndarray:
    return np.pad(values, 1, mode="reflect")


def laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """Discrete Laplacian of a whole array with mirrored ghost nodes."""
    p = _pad_mirror(values)
    out = np.zeros_like(values)
    d = values.ndim
    for k in range(d):
        c = [slice(1, -1)] * d
        lo, hi = list(c), list(c)
        lo[k], hi[k] = slice(0, -2), slice(2, None)
        out += p[tuple(hi)] - 2.0 * values + p[tuple(lo)]
    return out / (h * h)


def upwind_advection(values: np.ndarray, h: float, drift: np.ndarray) -> np.ndarray:
    """``sum_k c_k * D_k^{up} v`` over the whole array, Neumann ghosts at the boundary.

    ``drift`` has shape ``(d,) + values.shape``.
    """
    p = _pad_mirror(values)
    out = np.zeros_like(values)
    d = values.ndim
    for k in range(d):
        c = [slice(1, -1)] * d
        lo, hi = list(c), list(c)
        lo[k], hi[k] = slice(0, -2), slice(2, None)
        back = (values - p[tuple(lo)]) / h
        fwd = (p[tuple(hi)] - values) / h
        ck = drift[k]
        out += np.maximum(ck, 0.0) * back + np.minimum(ck, 0.0) * fwd
    return out


def central_gradient(values: np.ndarray, h: float) -> np.ndarray:
    """Central differences, shape ``(d,) + values.shape``; boundary entries one-sided."""
    grads = np.gradient(values, h, edge_order=1)
    if values.ndim == 1:
        grads = [grads]
    return np.stack(grads, axis=0)


def sup_norm_on_ball(field_a: ScalarField, field_b: ScalarField, r: float) -> float:
    """``max |A - B|`` over the nodes with ``|x| <= r``."""
    if not field_a.grid.compatible(field_b.grid):
        raise GridMismatchError("fields live on different grids")
    if not 0 < r <= field_a.grid.halfwidth:
        raise ValueError("need 0 < r <= L")
    mask = field_a.grid.radius() <= r + 1e-12
    return float(np.max(np.abs(field_a.values - field_b.values)[mask]))
