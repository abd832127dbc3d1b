"""Non-local transport distance between periodic densities and its geodesics.

The squared distance is the minimal time-integrated action over discrete
paths ``rho^0 = rho_0, ..., rho^L = rho_1`` joined by momenta obeying the
non-local continuity equation.  See :mod:`fpme._path` for the discretisation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ._path import NewtonReport, PathProblem, newton_minimize
from .grid import discrete_divergence, mass
from .kernel import KernelMatrix

__all__ = [
    "SolverConfig",
    "TransportResult",
    "solve_distance",
    "geodesic_speed_profile",
    "speed_flatness",
    "restriction_check",
    "rescaling_check",
    "w1_kantorovich",
    "w1_circle",
    "triangle_inequality_probe",
]

logger = logging.getLogger(__name__)

MASS_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the path solver.

    ``rtol`` bounds the Newton decrement relative to the objective; ``tol`` is
    the admissible sup-norm of the continuity residual.
    """

    n_intervals: int = 16
    max_iter: int = 200
    tol: float = 1e-9
    rtol: float = 1e-13
    floor: float = 1e-10
    init: str = "linear"
    seed: int | None = None

    def __post_init__(self):
        if self.n_intervals < 1:
            raise ValueError("need at least one time interval")
        if self.tol <= 0 or self.rtol <= 0:
            raise ValueError("tolerances must be positive")
        if self.init not in ("linear", "random"):
            raise ValueError(f"unknown initialisation {self.init!r}")


@dataclass
class TransportResult:
    distance: float
    objective: float
    densities: np.ndarray  # (L + 1, *grid.shape)
    momenta: np.ndarray  # (L, N, N) dense antisymmetric
    speed_profile: np.ndarray  # per-interval action
    iterations: int
    converged: bool
    decrement: float
    constraint_residual: float
    horizon: float = 1.0
    history: list = field(default_factory=list, repr=False)

    @property
    def n_intervals(self) -> int:
        return len(self.speed_profile)

    def summary(self) -> dict:
        return {
            "distance": self.distance,
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "constraint_residual": self.constraint_residual,
            "newton_decrement": self.decrement,
            "speed_profile": [float(a) for a in self.speed_profile],
        }


def _floor_for(m, cfg):
    return cfg.floor if m <= 1.0 else 0.0


def _prepare(rho, grid, m, cfg, name):
    r = np.asarray(rho, dtype=float)
    if r.size != grid.size:
        raise ValueError(f"{name} has {r.size} cells, kernel grid has {grid.size}")
    r = r.reshape(grid.shape)
    if not np.all(np.isfinite(r)) or np.any(r < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(mass(r, grid) - 1.0) > MASS_TOL:
        raise ValueError(f"{name} does not have unit mass (mass {mass(r, grid):.12g})")
    r = r.ravel()
    fl = _floor_for(m, cfg)
    if m <= 1.0 and np.any(r < fl):
        r = np.maximum(r, fl)
        r = r / (r.sum() * grid.cell_volume)
    return r


def _initial_path(r0, r1, L, cfg, grid, floor):
    s = np.linspace(0.0, 1.0, L + 1)[:, None]
    nodes = (1 - s) * r0[None, :] + s * r1[None, :]
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        noise = 1.0 + 0.2 * (rng.random(nodes[1:-1].shape) - 0.5)
        inner = np.maximum(nodes[1:-1] * noise, floor + 1e-12)
        nodes[1:-1] = inner / (inner.sum(axis=1, keepdims=True) * grid.cell_volume)
    if floor > 0:
        nodes[1:-1] = np.maximum(nodes[1:-1], floor * (1 + 1e-6))
    return nodes


def _continuity_residual(nodes, momenta, K: KernelMatrix, dt):
    worst = 0.0
    for k in range(1, len(nodes)):
        div = discrete_divergence(momenta[k - 1], K).ravel()
        r = (nodes[k] - nodes[k - 1]) / dt + div
        worst = max(worst, float(np.abs(r).max()))
    return worst


def _solve_path(r0, r1, K: KernelMatrix, m, cfg: SolverConfig, horizon=1.0):
    grid = K.grid
    L = cfg.n_intervals
    dt = horizon / L
    floor = _floor_for(m, cfg)
    problem = PathProblem(K.values * grid.cell_volume, grid.cell_volume, m, L, dt, scale=horizon, floor=floor)
    free = list(range(1, L))
    if np.array_equal(r0, r1):
        # the constant path is optimal
        nodes = np.repeat(r0[None, :], L + 1, axis=0)
    else:
        nodes = _initial_path(r0, r1, L, cfg, grid, floor)
    if free and not np.array_equal(r0, r1):
        nodes, rep = newton_minimize(problem, nodes, free, cfg.max_iter, cfg.rtol)
    else:
        value = problem.evaluate(nodes, free, 0)
        rep = NewtonReport(0, True, 0.0, [value])
    momenta, actions = problem.momenta(nodes)
    objective = horizon * float(np.sum(dt * actions))
    resid = _continuity_residual(nodes, momenta, K, dt)
    if not rep.converged:
        logger.warning("transport solve stopped after %d iterations without convergence", rep.iterations)
    if resid > cfg.tol:
        logger.warning("continuity residual %.3e exceeds tolerance %.1e", resid, cfg.tol)
    return TransportResult(
        distance=math.sqrt(max(objective, 0.0)),
        objective=objective,
        densities=nodes.reshape((L + 1,) + grid.shape),
        momenta=momenta,
        speed_profile=actions,
        iterations=rep.iterations,
        converged=rep.converged,
        decrement=rep.decrement,
        constraint_residual=resid,
        horizon=horizon,
        history=rep.history,
    )


def solve_distance(rho0, rho1, K: KernelMatrix, m: float, cfg: SolverConfig | None = None) -> TransportResult:
    """Distance between two unit-mass densities on the grid of ``K``.

    Parameters
    ----------
    rho0, rho1 : array_like
        Densities of the kernel's grid shape (or flattened), unit mass.
    K : KernelMatrix
    m : float
        Exponent of the m-mean, in ``(0, 2]``.
    cfg : SolverConfig, optional

    Returns
    -------
    TransportResult
        ``distance`` is the square root of the minimised time-integrated action.

    Raises
    ------
    ValueError
        On mass mismatch or malformed densities.
    """
    cfg = cfg or SolverConfig()
    grid = K.grid
    r0 = _prepare(rho0, grid, m, cfg, "rho0")
    r1 = _prepare(rho1, grid, m, cfg, "rho1")
    return _solve_path(r0, r1, K, m, cfg)


def geodesic_speed_profile(result: TransportResult) -> np.ndarray:
    return np.asarray(result.speed_profile, dtype=float)


def speed_flatness(result: TransportResult) -> float:
    """``max_k |a_k - mean(a)| / mean(a)`` of the per-interval actions (0 for a static path)."""
    a = geodesic_speed_profile(result)
    mean = float(a.mean())
    if mean <= 0:
        return 0.0
    return float(np.abs(a - mean).max() / mean)


def restriction_check(result: TransportResult, K: KernelMatrix, m: float, i: int, j: int,
                      cfg: SolverConfig | None = None):
    """Re-solve between path nodes ``i < j``; returns ``(W(rho^i, rho^j), (t_j - t_i) W)``."""
    cfg = cfg or SolverConfig()
    L = result.n_intervals
    if not 0 <= i < j <= L:
        raise ValueError("need 0 <= i < j <= L")
    sub = solve_distance(result.densities[i], result.densities[j], K, m, cfg)
    return sub.distance, (j - i) / L * result.distance


def rescaling_check(rho0, rho1, K: KernelMatrix, m: float, cfg: SolverConfig | None = None, horizon: float = 1.0):
    """Distance computed on the time interval ``[0, T]`` with objective ``T * int A dt``.

    Returns ``(W_T, W_1)``; both estimate the same distance.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    cfg = cfg or SolverConfig()
    grid = K.grid
    r0 = _prepare(rho0, grid, m, cfg, "rho0")
    r1 = _prepare(rho1, grid, m, cfg, "rho1")
    wT = _solve_path(r0, r1, K, m, cfg, horizon=horizon).distance
    w1 = _solve_path(r0, r1, K, m, cfg, horizon=1.0).distance
    return wT, w1


def w1_kantorovich(rho0, rho1, grid, max_cells: int = 1024) -> float:
    """Kantorovich-Rubinstein distance with torus cost, by linear programming (HiGHS)."""
    a = np.asarray(rho0, dtype=float).ravel() * grid.cell_volume
    b = np.asarray(rho1, dtype=float).ravel() * grid.cell_volume
    N = a.size
    if N > max_cells:
        raise ValueError(f"grid of {N} cells exceeds the dense LP limit of {max_cells}")
    if abs(a.sum() - b.sum()) > MASS_TOL:
        raise ValueError("mass mismatch")
    # only the imbalance needs to move
    net = a - b
    src = np.flatnonzero(net > 0)
    dst = np.flatnonzero(net < 0)
    if src.size == 0 or dst.size == 0:
        return 0.0
    cost = grid.distance_matrix[np.ix_(src, dst)]
    ns, nd = cost.shape
    A_eq = np.zeros((ns + nd, ns * nd))
    for i in range(ns):
        A_eq[i, i * nd:(i + 1) * nd] = 1.0
    for j in range(nd):
        A_eq[ns + j, j::nd] = 1.0
    b_eq = np.concatenate([net[src], -net[dst]])
    res = linprog(cost.ravel(), A_eq=A_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def w1_circle(rho0, rho1, grid) -> float:
    """One-dimensional closed form: ``min_c sum_i |F_i - c| h`` with ``F`` the cumulative imbalance."""
    if grid.d != 1:
        raise ValueError("closed form only on the circle")
    diff = (np.asarray(rho0, dtype=float) - np.asarray(rho1, dtype=float)).ravel() * grid.h
    F = np.cumsum(diff)
    c = np.median(F)
    return float(np.sum(np.abs(F - c)) * grid.h)


def triangle_inequality_probe(rho_a, rho_b, rho_c, K: KernelMatrix, m: float, cfg: SolverConfig | None = None):
    """``W(a, b) + W(b, c) - W(a, c)``; nonnegative up to solver tolerance."""
    cfg = cfg or SolverConfig()
    ab = solve_distance(rho_a, rho_b, K, m, cfg).distance
    bc = solve_distance(rho_b, rho_c, K, m, cfg).distance
    ac = solve_distance(rho_a, rho_c, K, m, cfg).distance
    return ab + bc - ac
