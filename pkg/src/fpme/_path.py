"""Space-time discretisation of the dynamic transport problem and its Newton solver.

A path is a sequence of node densities ``rho^0 .. rho^L`` on a time grid of
step ``dt``.  On interval ``k`` the mean density is ``(rho^{k-1} + rho^k)/2`` and
the momentum ``V^k`` must satisfy ``(rho^k - rho^{k-1})/dt + div V^k = 0``.

For fixed densities the optimal momentum has closed form: with the weighted
graph Laplacian ``M`` (weights ``theta_ij K_ij h^d``) and ``phi = M^+ b``,
``b = (rho^k - rho^{k-1})/dt``, one gets ``V_ij = theta_ij (phi_j - phi_i)`` and the
action ``h^d b.M^+ b``.  The reduced problem in the densities alone is convex and
smooth in the interior, and is minimised by a damped Newton method on the
mass-constrained affine space with exact Hessians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .means import theta, theta_partials, theta_second_partials


def _pinv_laplacian(M):
    N = M.shape[0]
    shift = max(float(np.trace(M)) / N, 1e-300)
    ones = np.full((N, N), 1.0 / N)
    return np.linalg.inv(M + shift * ones) - ones / shift


@dataclass
class IntervalTerms:
    value: float
    phi: np.ndarray
    theta: np.ndarray
    grad_u: np.ndarray
    grad_v: np.ndarray
    H_uu: np.ndarray | None = None
    H_uv: np.ndarray | None = None
    H_vv: np.ndarray | None = None


class PathProblem:
    """Objective ``scale * sum_k dt * A_k`` (+ optional terminal energy) over node densities.

    Parameters
    ----------
    Kh : ndarray (N, N)
        Kernel weights times the cell volume, zero diagonal.
    cell_volume : float
    m : float
    n_intervals : int
    dt : float
    scale : float
        Overall factor multiplying the time-integrated action.
    floor : float
        Lower bound kept on every free density value.
    terminal : callable, optional
        ``terminal(rho, order)`` returning ``value`` / ``(value, grad)`` /
        ``(value, grad, hess_diag)`` for the last node.
    """

    def __init__(self, Kh, cell_volume, m, n_intervals, dt, scale=1.0, floor=0.0, terminal=None):
        self.Kh = Kh
        self.hd = cell_volume
        self.m = m
        self.L = n_intervals
        self.dt = dt
        self.scale = scale
        self.floor = floor
        self.terminal = terminal
        self.N = Kh.shape[0]
        self._off = ~np.eye(self.N, dtype=bool)

    def interval(self, u, v, order=2) -> IntervalTerms:
        N, dt, Kh, off = self.N, self.dt, self.Kh, self._off
        c = self.scale * dt * self.hd
        rb = 0.5 * (u + v)
        b = (v - u) / dt
        b = b - b.mean()
        S = np.broadcast_to(rb[:, None], (N, N))[off]
        T = np.broadcast_to(rb[None, :], (N, N))[off]
        th = np.zeros((N, N))
        th[off] = theta(S, T, self.m)
        W = th * Kh
        M = np.diag(W.sum(axis=1)) - W
        Mp = _pinv_laplacian(M)
        phi = Mp @ b
        g = float(b @ phi)
        if order == 0:
            return IntervalTerms(c * g, phi, th, None, None)
        Delta = phi[:, None] - phi[None, :]
        E = np.zeros((N, N))
        E[off] = theta_partials(S, T, self.m)[0]
        E *= Kh
        g_r = -(E * Delta**2).sum(axis=1)
        g_b = 2.0 * phi
        grad_u = c * (0.5 * g_r - g_b / dt)
        grad_v = c * (0.5 * g_r + g_b / dt)
        out = IntervalTerms(c * g, phi, th, grad_u, grad_v)
        if order < 2:
            return out
        _, d12, _ = theta_second_partials(S, T, self.m)
        F12 = np.zeros((N, N))
        F12[off] = d12
        F12 *= Kh
        d11 = np.zeros((N, N))
        d11[off] = -(T / S) * d12
        d11 *= Kh
        psi = -F12 * Delta**2
        psi[np.diag_indices(N)] = -(d11 * Delta**2).sum(axis=1)
        C = E.T * Delta
        C[np.diag_indices(N)] = (E * Delta).sum(axis=1)
        MpC = Mp @ C
        Gbb = 2.0 * Mp
        Gbr = -2.0 * MpC
        Grr = psi + 2.0 * C.T @ MpC
        Grr = 0.5 * (Grr + Grr.T)
        cross = (Gbr + Gbr.T) / (2.0 * dt)
        asym = (Gbr.T - Gbr) / (2.0 * dt)  # Grb - Gbr over 2 dt
        out.H_uu = c * (Gbb / dt**2 - cross + Grr / 4.0)
        out.H_vv = c * (Gbb / dt**2 + cross + Grr / 4.0)
        out.H_uv = c * (-Gbb / dt**2 + asym + Grr / 4.0)
        return out

    def evaluate(self, nodes, free, order=2):
        """Objective, gradient and Hessian over the free nodes.

        ``nodes`` has shape ``(L + 1, N)``; ``free`` lists the node indices that
        are optimisation variables (in increasing order).
        """
        L, N = self.L, self.N
        pos = {k: i for i, k in enumerate(free)}
        nf = len(free)
        value = 0.0
        grad = np.zeros((nf, N)) if order >= 1 else None
        hess = np.zeros((nf * N, nf * N)) if order >= 2 else None
        for k in range(1, L + 1):
            t = self.interval(nodes[k - 1], nodes[k], order)
            value += t.value
            if order == 0:
                continue
            a, b = pos.get(k - 1), pos.get(k)
            if a is not None:
                grad[a] += t.grad_u
            if b is not None:
                grad[b] += t.grad_v
            if order < 2:
                continue
            if a is not None:
                hess[a * N:(a + 1) * N, a * N:(a + 1) * N] += t.H_uu
            if b is not None:
                hess[b * N:(b + 1) * N, b * N:(b + 1) * N] += t.H_vv
            if a is not None and b is not None:
                hess[a * N:(a + 1) * N, b * N:(b + 1) * N] += t.H_uv
                hess[b * N:(b + 1) * N, a * N:(a + 1) * N] += t.H_uv.T
        if self.terminal is not None and L in pos:
            last = pos[L]
            res = self.terminal(nodes[L], order)
            if order == 0:
                value += res
            else:
                value += res[0]
                grad[last] += res[1]
                if order >= 2:
                    idx = np.arange(last * N, (last + 1) * N)
                    hess[idx, idx] += res[2]
        if order == 0:
            return value
        if order == 1:
            return value, grad
        return value, grad, hess

    def momenta(self, nodes):
        """Optimal momenta ``V^k`` (dense antisymmetric) and per-interval actions."""
        Vs, actions = [], []
        for k in range(1, self.L + 1):
            t = self.interval(nodes[k - 1], nodes[k], order=0)
            V = t.theta * (t.phi[None, :] - t.phi[:, None])
            Vs.append(V)
            actions.append(t.value / (self.scale * self.dt))
        return np.array(Vs), np.array(actions)


@dataclass
class NewtonReport:
    iterations: int
    converged: bool
    decrement: float
    history: list


def newton_minimize(problem: PathProblem, nodes, free, max_iter=100, rtol=1e-13, atol=1e-18):
    """Damped Newton on the free nodes with one unit-mass constraint per node.

    Steps stay in ``rho > floor`` (fraction to the boundary) and satisfy an Armijo
    decrease; the objective is therefore nonincreasing across iterations.
    """
    nodes = np.array(nodes, dtype=float)
    N = problem.N
    nf = len(free)
    n = nf * N
    A = np.zeros((nf, n))
    for i in range(nf):
        A[i, i * N:(i + 1) * N] = 1.0
    value, grad, hess = problem.evaluate(nodes, free, 2)
    history = [value]
    dec = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = grad.ravel()
        reg = 1e-13 * max(float(np.abs(np.diag(hess)).max()), 1e-300)
        KKT = np.zeros((n + nf, n + nf))
        KKT[:n, :n] = hess + reg * np.eye(n)
        KKT[:n, n:] = A.T
        KKT[n:, :n] = A
        rhs = np.concatenate([-g, np.zeros(nf)])
        try:
            step = np.linalg.solve(KKT, rhs)[:n]
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(KKT, rhs, rcond=None)[0][:n]
        dec = float(-g @ step)
        if dec <= 0 or 0.5 * dec <= rtol * abs(value) + atol:
            converged = True
            break
        x = nodes[free].ravel()
        neg = step < 0
        alpha = 1.0
        if np.any(neg):
            room = (x[neg] - problem.floor) / (-step[neg])
            alpha = min(1.0, 0.995 * float(room.min()))
        trial_value = None
        while alpha > 1e-12:
            trial = nodes.copy()
            trial[free] = (x + alpha * step).reshape(nf, N)
            trial_value = problem.evaluate(trial, free, 0)
            if trial_value <= value - 1e-4 * alpha * dec:
                break
            alpha *= 0.5
        else:
            # no descent left at working precision
            converged = 0.5 * dec <= 1e-8 * max(abs(value), 1e-300)
            break
        nodes = trial
        value, grad, hess = problem.evaluate(nodes, free, 2)
        history.append(value)
    return nodes, NewtonReport(it, converged, dec, history)
