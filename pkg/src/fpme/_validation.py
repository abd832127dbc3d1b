"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numpy as np

from .grid import Grid, mass
from .means import Nonlinearity

MASS_ATOL = 1e-9


def check_grid_shape(X) -> Grid:
    """Infer the grid from an array of shape ``(n,)`` or ``(n, n)``."""
    X = np.asarray(X)
    if X.ndim not in (1, 2) or (X.ndim == 2 and X.shape[0] != X.shape[1]):
        raise ValueError(f"expected a field of shape (n,) or (n, n), got {X.shape}")
    return Grid.from_shape(X.shape)


def check_field(X, grid: Grid | None = None, name: str = "field") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if grid is not None and X.size != grid.size:
        raise ValueError(f"{name} has {X.size} cells, expected {grid.size}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return X.reshape(grid.shape) if grid is not None else X


def check_density(X, grid: Grid | None = None, name: str = "density") -> np.ndarray:
    """Finite, nonnegative and of unit mass within ``1e-9``."""
    X = check_field(X, grid, name)
    grid = grid or check_grid_shape(X)
    X = X.reshape(grid.shape)
    if np.any(X < 0):
        raise ValueError(f"{name} has negative entries")
    total = mass(X, grid)
    if abs(total - 1.0) > MASS_ATOL:
        raise ValueError(f"{name} does not have unit mass (mass {total:.12g})")
    return X


def check_same_grid(a, b, names=("rho0", "rho1")):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{names[0]} and {names[1]} have different shapes {np.shape(a)} and {np.shape(b)}")


def check_exponent(m: float, sigma: float, d: int, strict: bool = False) -> Nonlinearity:
    """Validate ``m`` in ``(0, 2]``; warn (or raise if ``strict``) at or below the critical exponent."""
    return Nonlinearity(float(m), float(sigma), int(d)).check(strict=strict)
