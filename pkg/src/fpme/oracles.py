"""Reference solutions independent of the transport machinery.

* :func:`spectral_heat_flow` evolves the linear fractional heat equation with the
  continuum Fourier symbol ``|2 pi k|^(2 sigma)``, so its gap to a discrete flow
  measures discretisation error.
* :func:`integrate_semidiscrete` runs classic fixed-step RK4 on the non-local
  porous medium ODE ``rho_i' = sum_j (rho_j^m - rho_i^m) K_ij h^d``.
* :func:`two_cell_distance` and :func:`two_cell_metric_quadrature` compute the
  distance on a two-cell grid, where the path is a single scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .grid import Grid
from .kernel import KernelMatrix
from .means import theta, theta_partials, theta_second_partials

__all__ = [
    "SpectralPlan",
    "spectral_plan",
    "spectral_heat_flow",
    "semidiscrete_rhs",
    "stable_time_step",
    "integrate_semidiscrete",
    "two_cell_distance",
    "two_cell_metric_quadrature",
]

NEGATIVITY_TOL = 1e-12


@dataclass(frozen=True)
class SpectralPlan:
    grid: Grid
    sigma: float
    symbol: np.ndarray  # |2 pi k|^(2 sigma), grid shape, FFT ordering


def spectral_plan(grid: Grid, sigma: float) -> SpectralPlan:
    freqs = [np.fft.fftfreq(grid.n, d=1.0 / grid.n)] * grid.d
    mesh = np.meshgrid(*freqs, indexing="ij")
    k2 = sum(k**2 for k in mesh)
    symbol = (2.0 * math.pi * np.sqrt(k2)) ** (2.0 * sigma)
    symbol.flat[0] = 0.0
    return SpectralPlan(grid, sigma, symbol)


def spectral_heat_flow(rho0, sigma: float, t: float, grid: Grid | None = None) -> np.ndarray:
    """Exact solution of ``rho_t + (-Delta)^sigma rho = 0`` for trigonometric data.

    Parameters
    ----------
    rho0 : ndarray
        Cell values on a 1D or 2D periodic grid.
    sigma : float
    t : float
        Nonnegative time.

    Returns
    -------
    ndarray
        Same shape as ``rho0``.  The mean is preserved exactly.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    rho0 = np.asarray(rho0, dtype=float)
    grid = grid or Grid.from_shape(rho0.shape)
    if t == 0:
        return rho0.copy()
    plan = spectral_plan(grid, sigma)
    coef = np.fft.fftn(rho0.reshape(grid.shape))
    return np.real(np.fft.ifftn(coef * np.exp(-plan.symbol * t))).reshape(rho0.shape)


def semidiscrete_rhs(rho, m: float, K: KernelMatrix) -> np.ndarray:
    """Right-hand side ``sum_j (rho_j^m - rho_i^m) K_ij h^d`` (grid shape)."""
    grid = K.grid
    r = np.asarray(rho, dtype=float).ravel()
    if m < 1.0 and np.any(r <= 0):
        raise ValueError("vacuum cell with m < 1: floor the density first")
    p = r**m
    Kh = K.values * grid.cell_volume
    out = Kh @ p - Kh.sum(axis=1) * p
    return out.reshape(grid.shape)


def stable_time_step(rho, m: float, K: KernelMatrix) -> float:
    """A priori RK4 step bound ``1 / (2 max_i sum_j slope K_ij h^d)``.

    ``slope`` is the largest derivative ``m s^(m-1)`` over the range of ``rho``:
    attained at the maximum for ``m >= 1`` and at the minimum for ``m < 1``.
    """
    r = np.asarray(rho, dtype=float)
    row = float((K.values.sum(axis=1) * K.grid.cell_volume).max())
    extreme = float(r.max()) if m >= 1.0 else float(r.min())
    slope = m * extreme ** (m - 1.0) if m != 1.0 else 1.0
    return 1.0 / (2.0 * slope * row)


def integrate_semidiscrete(rho0, m: float, K: KernelMatrix, t_final: float, dt: float | None = None) -> np.ndarray:
    """Fixed-step RK4 for the semidiscrete porous medium equation.

    The step is shortened to fit ``t_final`` exactly and capped by
    :func:`stable_time_step`, re-estimated every step.

    Raises
    ------
    FloatingPointError
        If a density value drops below ``-1e-12``.
    """
    grid = K.grid
    r = np.asarray(rho0, dtype=float).reshape(grid.shape).copy()
    if t_final < 0:
        raise ValueError("final time must be nonnegative")
    t = 0.0
    while t < t_final * (1 - 1e-14):
        step = stable_time_step(r, m, K)
        if dt is not None:
            step = min(step, dt)
        # equal steps over the remaining interval keep the schedule deterministic
        n_left = math.ceil((t_final - t) / step - 1e-9)
        step = (t_final - t) / n_left
        k1 = semidiscrete_rhs(r, m, K)
        k2 = semidiscrete_rhs(r + 0.5 * step * k1, m, K)
        k3 = semidiscrete_rhs(r + 0.5 * step * k2, m, K)
        k4 = semidiscrete_rhs(r + step * k3, m, K)
        r = r + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += step
        low = float(r.min())
        if low < -NEGATIVITY_TOL:
            raise FloatingPointError(f"RK4 produced density {low:.3e} at t={t:.6g}; reduce dt")
        if low < 0:
            r = np.maximum(r, 0.0)
    return r


def _two_cell_setup(rho0, rho1, K):
    if K.grid.size != 2:
        raise ValueError("two-cell oracle needs a grid with exactly two cells")
    k = float(K.values[0, 1])
    a0 = float(np.ravel(rho0)[0])
    a1 = float(np.ravel(rho1)[0])
    total = float(np.sum(rho0))
    return k, a0, a1, total


def two_cell_metric_quadrature(rho0, rho1, K: KernelMatrix, m: float) -> float:
    """Distance on two cells as the length ``int da / sqrt(K theta(a, 2 - a))``."""
    k, a0, a1, total = _two_cell_setup(rho0, rho1, K)
    if a0 == a1:
        return 0.0
    lo, hi = sorted((a0, a1))

    def speed(a):
        return 1.0 / math.sqrt(k * float(theta(a, total - a, m)))

    val, _ = integrate.quad(speed, lo, hi, epsabs=0, epsrel=1e-13, limit=200)
    return val


def two_cell_distance(rho0, rho1, K: KernelMatrix, m: float, n_intervals: int = 4096,
                      max_iter: int = 100) -> float:
    """Direct minimisation of the discrete two-cell action on a fine time grid.

    The path is the first cell's value ``a(t)``; the action of a step is
    ``(delta a / dt)^2 / (K theta(abar, 2 - abar))``.  The objective is convex and
    its Hessian tridiagonal, so damped Newton with a banded solve is used.
    """
    k, a0, a1, total = _two_cell_setup(rho0, rho1, K)
    L = n_intervals
    dt = 1.0 / L
    a = np.linspace(a0, a1, L + 1)

    def pieces(a, order):
        D = np.diff(a)
        ab = 0.5 * (a[1:] + a[:-1])
        th = theta(ab, total - ab, m)
        f = np.sum(D**2 / (k * th)) / dt
        if order == 0:
            return f
        ds, dt_ = theta_partials(ab, total - ab, m)
        d1 = ds - dt_
        g = 1.0 / (k * th)
        g1 = -d1 / (k * th**2)
        fD = 2 * D * g / dt
        fa = D**2 * g1 / dt
        grad = np.zeros(L + 1)
        grad[1:] += fD + 0.5 * fa
        grad[:-1] += -fD + 0.5 * fa
        sss, sst, stt = theta_second_partials(ab, total - ab, m)
        d2 = sss - 2 * sst + stt
        g2 = (2 * d1**2 - th * d2) / (k * th**3)
        fDD = 2 * g / dt
        fDa = 2 * D * g1 / dt
        faa = D**2 * g2 / dt
        diag = np.zeros(L + 1)
        diag[1:] += fDD + fDa + 0.25 * faa
        diag[:-1] += fDD - fDa + 0.25 * faa
        off = -fDD + 0.25 * faa
        return f, grad[1:-1], diag[1:-1], off[1:-1]

    f, g, dg, od = pieces(a, 2)
    for _ in range(max_iter):
        band = np.zeros((3, L - 1))
        band[0, 1:] = od
        band[1] = dg
        band[2, :-1] = od
        step = -linalg.solve_banded((1, 1), band, g)
        dec = float(-g @ step)
        if dec <= 1e-15 * f:
            break
        alpha = 1.0
        neg = step < 0
        if np.any(neg):
            alpha = min(1.0, 0.995 * float((a[1:-1][neg] / -step[neg]).min()))
        pos = step > 0
        if np.any(pos):
            alpha = min(alpha, 0.995 * float(((total - a[1:-1][pos]) / step[pos]).min()))
        while alpha > 1e-12:
            trial = a.copy()
            trial[1:-1] += alpha * step
            ft = pieces(trial, 0)
            if ft <= f - 1e-4 * alpha * dec:
                break
            alpha *= 0.5
        else:
            break
        a = trial
        f, g, dg, od = pieces(a, 2)
    return math.sqrt(f)
