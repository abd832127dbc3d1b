"""Periodic cell-centred grids on the unit torus and the discrete calculus on them.

Densities live on cell centres ``x_i = i * h`` of a uniform grid with ``n`` cells
per axis.  Fields are numpy arrays whose shape is the grid shape (``(n,)`` or
``(n, n)``); the solvers work on the flattened, row-major view of length
``N = n**d``.  Pair fields (fluxes between ordered cell pairs) are dense
antisymmetric ``(N, N)`` arrays in memory; :class:`PairField` is the packed
upper-triangle form used for storage.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "PairField",
    "make_grid",
    "torus_distance",
    "discrete_gradient",
    "discrete_divergence",
    "normalize",
    "mass",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, 1)^d``.

    Parameters
    ----------
    d : int
        Spatial dimension, 1 or 2.
    n : int
        Cells per axis, at least 2.
    """

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"unsupported dimension {self.d!r}; expected 1 or 2")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need at least 2 cells per axis, got n={self.n!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell-centre coordinates, shape ``(N, d)`` in row-major order."""
        axes = [np.arange(self.n) * self.h] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        """Torus distances between all pairs of cell centres, shape ``(N, N)``."""
        x = self.centers
        return torus_distance(x[:, None, :], x[None, :, :])

    @classmethod
    def from_shape(cls, shape) -> "Grid":
        shape = tuple(shape)
        if len(shape) not in (1, 2) or len(set(shape)) != 1:
            raise ValueError(f"field shape {shape} is not a square grid of dimension 1 or 2")
        return cls(len(shape), shape[0])


def make_grid(d: int, n: int) -> Grid:
    return Grid(d, n)


def _wrap(delta):
    """Map coordinate differences into ``[-1/2, 1/2)``."""
    return delta - np.floor(delta + 0.5)


def torus_distance(x, y):
    """Distance ``min_k |x - y + k|`` on the flat unit torus.

    Inputs broadcast over leading axes; the last axis holds coordinates.  Scalars
    are treated as one-dimensional points.  Points outside ``[0, 1)`` are wrapped.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 0 and y.ndim == 0:
        return float(abs(_wrap(x - y)))
    delta = _wrap(np.mod(x, 1.0) - np.mod(y, 1.0))
    out = np.sqrt(np.sum(delta * delta, axis=-1))
    return float(out) if out.ndim == 0 else out


def discrete_gradient(phi) -> np.ndarray:
    """Pair differences ``grad(phi)[i, j] = phi[j] - phi[i]`` over the flattened field."""
    p = np.asarray(phi, dtype=float).ravel()
    return p[None, :] - p[:, None]


def _pair_values(V, N: int) -> np.ndarray:
    if isinstance(V, PairField):
        V = V.dense()
    V = np.asarray(V, dtype=float)
    if V.shape != (N, N):
        raise ValueError(f"pair field has shape {V.shape}, expected {(N, N)}")
    return V


def discrete_divergence(V, K) -> np.ndarray:
    """Non-local divergence ``(div V)_i = sum_{j != i} V_ij K_ij h^d``.

    Defined as the negative adjoint of :func:`discrete_gradient` under the pairing
    ``1/2 sum_{i != j} grad(phi)_ij V_ij K_ij h^{2d}``, so the continuity equation
    reads ``d rho/dt + div V = 0``.  Returns a field of the grid shape.
    """
    grid = K.grid
    Kv = K.values
    V = _pair_values(V, grid.size)
    div = np.einsum("ij,ij->i", V, Kv) * grid.cell_volume
    return div.reshape(grid.shape)


def mass(rho, grid: Grid | None = None) -> float:
    rho = np.asarray(rho, dtype=float)
    grid = grid or Grid.from_shape(rho.shape)
    return float(rho.sum() * grid.cell_volume)


def normalize(rho, grid: Grid | None = None) -> np.ndarray:
    """Rescale a nonnegative field to unit mass."""
    rho = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(rho)):
        raise ValueError("density contains non-finite values")
    if np.any(rho < 0):
        raise ValueError("density has negative entries")
    total = mass(rho, grid)
    if total <= 0:
        raise ValueError("density has zero total mass")
    return rho / total


@dataclass(frozen=True)
class PairField:
    """Antisymmetric pair field stored as its strict upper triangle (``i < j``)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        N = self.grid.size
        expected = N * (N - 1) // 2
        if np.shape(self.values) != (expected,):
            raise ValueError(f"expected {expected} upper-triangle values, got {np.shape(self.values)}")

    @classmethod
    def from_dense(cls, grid: Grid, V) -> "PairField":
        V = np.asarray(V, dtype=float)
        iu = np.triu_indices(grid.size, k=1)
        return cls(grid, V[iu].copy())

    def dense(self) -> np.ndarray:
        N = self.grid.size
        out = np.zeros((N, N))
        iu = np.triu_indices(N, k=1)
        out[iu] = self.values
        return out - out.T
