"""Non-local kinetic action of a density and an antisymmetric momentum field.

With momentum ``V`` (the flux measure is ``V_ij K_ij``) the action is

    A(rho, V) = 1/2 sum_{i != j} V_ij^2 / theta_m(rho_i, rho_j) K_ij h^{2d},

with ``0^2 / 0 = 0`` and ``+inf`` whenever a pair carries momentum across a
zero mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import PairField, _pair_values
from .kernel import KernelMatrix, comp_estimate_constant
from .means import theta, theta_partials

__all__ = ["ActionValue", "action", "action_gradients", "transport_estimate"]


@dataclass(frozen=True)
class ActionValue:
    value: float
    finite: bool

    def __float__(self):
        return self.value if self.finite else math.inf


def _fields(rho, V, K: KernelMatrix):
    grid = K.grid
    r = np.asarray(rho, dtype=float).ravel()
    if r.size != grid.size:
        raise ValueError(f"density with {r.size} cells does not match the kernel grid ({grid.size} cells)")
    if isinstance(V, PairField) and V.grid != grid:
        raise ValueError("pair field and kernel live on different grids")
    return grid, r, _pair_values(V, grid.size)


def action(rho, V, K: KernelMatrix, m: float) -> ActionValue:
    grid, r, V = _fields(rho, V, K)
    th = theta(r[:, None], r[None, :], m)
    moving = V != 0
    np.fill_diagonal(moving, False)
    if np.any(moving & (th == 0)):
        return ActionValue(math.inf, False)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(moving, V * V / np.where(th > 0, th, 1.0), 0.0)
    return ActionValue(float(0.5 * np.sum(dens * K.values) * grid.cell_volume**2), True)


def action_gradients(rho, V, K: KernelMatrix, m: float):
    """Gradients of the action with respect to the density and the packed momentum.

    Returns
    -------
    grad_rho : ndarray, grid shape
    grad_V : PairField
        Derivative with respect to the stored upper-triangle values ``V_ij, i < j``
        (each stored value represents both ``V_ij`` and ``V_ji = -V_ij``).
    """
    grid, r, V = _fields(rho, V, K)
    N = grid.size
    off = ~np.eye(N, dtype=bool)
    if np.any(r <= 0):
        vac = (r[:, None] <= 0) | (r[None, :] <= 0)
        th0 = theta(r[:, None], r[None, :], m)
        if np.any((V != 0) & off & (th0 == 0)):
            raise ValueError("momentum on a vacuum pair: the action is infinite")
        if np.any((V != 0) & off & vac):
            raise ValueError("action gradient undefined at vacuum cells carrying momentum")
    s = np.broadcast_to(r[:, None], (N, N))[off]
    t = np.broadcast_to(r[None, :], (N, N))[off]
    th = np.zeros((N, N))
    ds = np.zeros((N, N))
    th[off] = theta(s, t, m)
    if np.all(r > 0):
        ds[off] = theta_partials(s, t, m)[0]
    w = K.values * grid.cell_volume**2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(off, V / np.where(off, th, 1.0), 0.0)
    gV = 2.0 * ratio * w  # d/dV_ij of both ordered terms
    # each ordered pair (i, j) contributes -1/2 V^2/theta^2 d_1 theta(rho_i, rho_j) to rho_i,
    # and by symmetry of theta the pair (j, i) contributes the same again
    grho = -(ratio**2 * ds * w).sum(axis=1)
    return grho.reshape(grid.shape), PairField.from_dense(grid, gV)


def transport_estimate(rho, V, K: KernelMatrix, m: float):
    """Both sides of ``sum d(x_i, x_j) |V_ij| K_ij h^{2d} <= C sqrt(A(rho, V))``.

    Returns ``(lhs, rhs)``; ``C`` is :func:`comp_estimate_constant`.
    """
    grid, r, Vd = _fields(rho, V, K)
    lhs = float(np.sum(grid.distance_matrix * np.abs(Vd) * K.values) * grid.cell_volume**2)
    A = float(action(r.reshape(grid.shape), Vd, K, m))
    return lhs, comp_estimate_constant(grid, K) * math.sqrt(A)
