"""scikit-learn style wrappers around the functional core.

Each estimator takes its settings in ``__init__`` (so ``get_params`` and
``set_params`` work), infers the grid from the first field passed to ``fit``,
and stores learned state in trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_density, check_exponent, check_field, check_grid_shape, check_same_grid
from .jko import JkoConfig, jko_flow
from .kernel import KernelConfig, apply_fractional_operator, kernel_matrix
from .oracles import integrate_semidiscrete, spectral_heat_flow
from .transport import SolverConfig, solve_distance

__all__ = ["FractionalKernel", "NonlocalTransport", "JKOFlow", "SpectralHeatFlow", "SemidiscreteFlow"]


class _KernelMixin:
    def _fit_kernel(self, X):
        grid = check_grid_shape(X)
        cfg = KernelConfig(radius=self.radius, tail_correction=self.tail_correction)
        self.grid_ = grid
        self.kernel_ = kernel_matrix(grid, self.sigma, cfg)
        return grid


class FractionalKernel(_KernelMixin, TransformerMixin, BaseEstimator):
    """Discrete fractional Laplacian on the periodic grid of the fitted field.

    Parameters
    ----------
    sigma : float
        Order in ``(0, 1)``.
    radius : int
        Lattice-sum truncation radius.
    tail_correction : bool
        Add the asymptotic estimate of the truncated lattice tail.

    Attributes
    ----------
    grid_ : Grid
    kernel_ : KernelMatrix
    """

    def __init__(self, sigma=0.5, radius=8, tail_correction=True):
        self.sigma = sigma
        self.radius = radius
        self.tail_correction = tail_correction

    def fit(self, X, y=None):
        self._fit_kernel(check_field(X))
        return self

    def transform(self, X):
        check_is_fitted(self, "kernel_")
        X = check_field(X, self.grid_)
        return apply_fractional_operator(X, self.kernel_)


class NonlocalTransport(_KernelMixin, BaseEstimator):
    """Distance between two densities and the optimal path joining them.

    ``fit(rho0, rho1)`` solves the transport problem; ``predict(s)`` returns the
    path node nearest to the fraction ``s`` in ``[0, 1]``.

    Attributes
    ----------
    distance_ : float
    path_ : ndarray of shape (n_intervals + 1, *grid_shape)
    result_ : TransportResult
    """

    def __init__(self, m=2.0, sigma=0.5, n_intervals=16, radius=8, tail_correction=True, tol=1e-9,
                 init="linear", seed=None):
        self.m = m
        self.sigma = sigma
        self.n_intervals = n_intervals
        self.radius = radius
        self.tail_correction = tail_correction
        self.tol = tol
        self.init = init
        self.seed = seed

    def fit(self, X, y):
        check_same_grid(X, y)
        grid = self._fit_kernel(check_field(X))
        rho0 = check_density(X, grid, "rho0")
        rho1 = check_density(y, grid, "rho1")
        check_exponent(self.m, self.sigma, grid.d)
        cfg = SolverConfig(n_intervals=self.n_intervals, tol=self.tol, init=self.init, seed=self.seed)
        self.result_ = solve_distance(rho0, rho1, self.kernel_, self.m, cfg)
        self.distance_ = self.result_.distance
        self.path_ = self.result_.densities
        return self

    def predict(self, s):
        check_is_fitted(self, "path_")
        s = np.asarray(s, dtype=float)
        if np.any((s < 0) | (s > 1)):
            raise ValueError("path fraction must lie in [0, 1]")
        idx = np.rint(s * (len(self.path_) - 1)).astype(int)
        return self.path_[idx]

    def score(self, X=None, y=None):
        """Negative distance, so that larger is better."""
        check_is_fitted(self, "distance_")
        return -self.distance_


class JKOFlow(_KernelMixin, TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Minimizing-movement flow of the entropy from the fitted initial density.

    Attributes
    ----------
    trajectory_ : Trajectory
    """

    def __init__(self, m=2.0, sigma=0.5, tau=1e-3, steps=10, n_intervals=8, radius=8,
                 tail_correction=True, strict=False):
        self.m = m
        self.sigma = sigma
        self.tau = tau
        self.steps = steps
        self.n_intervals = n_intervals
        self.radius = radius
        self.tail_correction = tail_correction
        self.strict = strict

    def fit(self, X, y=None):
        grid = self._fit_kernel(check_field(X))
        rho0 = check_density(X, grid, "rho0")
        check_exponent(self.m, self.sigma, grid.d, strict=self.strict)
        cfg = JkoConfig(self.tau, self.steps, self.m, SolverConfig(n_intervals=self.n_intervals))
        self.trajectory_ = jko_flow(rho0, self.kernel_, cfg)
        return self

    def transform(self, X=None):
        """Final density of the fitted trajectory."""
        check_is_fitted(self, "trajectory_")
        return self.trajectory_.snapshots[-1]

    def predict(self, t):
        """Piecewise-constant interpolant at time ``t``."""
        check_is_fitted(self, "trajectory_")
        return self.trajectory_.at(float(t))


class SpectralHeatFlow(TransformerMixin, BaseEstimator):
    """Exact fractional heat semigroup at time ``t`` (stateless)."""

    def __init__(self, sigma=0.5, t=0.05):
        self.sigma = sigma
        self.t = t

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        X = check_field(X)
        check_grid_shape(X)
        return spectral_heat_flow(X, self.sigma, self.t)


class SemidiscreteFlow(_KernelMixin, TransformerMixin, BaseEstimator):
    """RK4 endpoint of the semidiscrete porous medium equation at time ``t``."""

    def __init__(self, m=2.0, sigma=0.5, t=0.05, dt=None, radius=8, tail_correction=True):
        self.m = m
        self.sigma = sigma
        self.t = t
        self.dt = dt
        self.radius = radius
        self.tail_correction = tail_correction

    def fit(self, X, y=None):
        self._fit_kernel(check_field(X))
        return self

    def transform(self, X):
        check_is_fitted(self, "kernel_")
        X = check_field(X, self.grid_)
        return integrate_semidiscrete(X, self.m, self.kernel_, self.t, self.dt)
