"""Minimizing-movement (JKO) scheme for the fractional porous medium equation.

Each step minimises ``W^2(rho_prev, rho) / (2 tau) + U_m(rho)``.  The distance is
not computed in an inner loop: the step is one convex space-time program over
a path starting at ``rho_prev`` whose terminal density is free, with the
entropy acting on the terminal node.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._path import PathProblem, newton_minimize
from .grid import mass
from .kernel import KernelMatrix
from .means import entropy, fisher_information, u_m, u_m_prime, u_m_second
from .transport import SolverConfig, _continuity_residual, _prepare, solve_distance

__all__ = ["JkoConfig", "StepDiagnostics", "Trajectory", "phi", "jko_step", "jko_flow", "dissipation_check"]

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = (
    "step", "time", "mass", "entropy", "fisher", "w2_step", "min_density", "inner_iterations", "residual",
)


@dataclass(frozen=True)
class JkoConfig:
    tau: float
    steps: int
    m: float
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(n_intervals=8))
    entropy_tol: float = 1e-6

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("time step tau must be positive")
        if self.steps < 1:
            raise ValueError("need at least one step")


@dataclass
class StepDiagnostics:
    step: int
    time: float
    mass: float
    entropy: float
    fisher: float
    w2_step: float
    min_density: float
    inner_iterations: int
    residual: float
    converged: bool = True

    def row(self):
        return [getattr(self, c) for c in DIAGNOSTIC_COLUMNS]


@dataclass
class Trajectory:
    """Snapshots ``rho^0 .. rho^S`` at times ``n tau`` with per-step diagnostics."""

    tau: float
    snapshots: list
    diagnostics: list
    complete: bool = True

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(len(self.snapshots))

    def at(self, t: float) -> np.ndarray:
        """Piecewise-constant interpolant: ``rho^n`` for ``t`` in ``[n tau, (n+1) tau)``."""
        n = int(math.floor(t / self.tau + 1e-9))
        return self.snapshots[min(n, len(self.snapshots) - 1)]

    def column(self, name):
        return np.array([getattr(d, name) for d in self.diagnostics])


def _entropy_terminal(m, hd):
    def terminal(rho, order):
        val = float(np.sum(u_m(rho, m)) * hd)
        if order == 0:
            return val
        g = u_m_prime(rho, m) * hd
        if order == 1:
            return val, g
        return val, g, u_m_second(rho, m) * hd

    return terminal


def _diagnostics(step, t, rho, K, m, w2, iters, resid, converged=True):
    grid = K.grid
    r = rho.reshape(grid.shape)
    if m <= 1.0 and np.any(r <= 0):
        fisher = math.inf
    else:
        fisher = fisher_information(r, m, K)
    return StepDiagnostics(step, t, mass(r, grid), entropy(r, m, grid), fisher, w2, float(r.min()),
                           iters, resid, converged)


def phi(tau: float, rho_prev, rho, K: KernelMatrix, m: float, cfg: SolverConfig | None = None) -> float:
    """Minimizing-movement functional ``W^2(rho_prev, rho) / (2 tau) + U_m(rho)``."""
    res = solve_distance(rho_prev, rho, K, m, cfg or SolverConfig(n_intervals=8))
    grid = K.grid
    return res.objective / (2.0 * tau) + entropy(np.asarray(rho).reshape(grid.shape), m, grid)


def jko_step(rho_prev, K: KernelMatrix, m: float, cfg: JkoConfig):
    """One minimizing-movement step.

    Returns
    -------
    rho_next : ndarray
        Terminal density of the optimal path, grid shape.
    info : dict
        ``w2_step`` (the time-integrated action of the optimal path),
        ``entropy_before``, ``entropy_after``, ``iterations``, ``converged``,
        ``residual`` (continuity, sup norm), ``path``.
    """
    grid = K.grid
    scfg = cfg.solver
    r0 = _prepare(rho_prev, grid, m, scfg, "rho_prev")
    L = scfg.n_intervals
    floor = scfg.floor if m <= 1.0 else 0.0
    hd = grid.cell_volume
    problem = PathProblem(K.values * hd, hd, m, L, 1.0 / L, scale=1.0 / (2.0 * cfg.tau), floor=floor,
                          terminal=_entropy_terminal(m, hd))
    nodes = np.repeat(r0[None, :], L + 1, axis=0)
    if scfg.init == "random":
        rng = np.random.default_rng(scfg.seed)
        noise = 1.0 + 0.2 * (rng.random(nodes[1:].shape) - 0.5)
        pert = np.maximum(nodes[1:] * noise, floor * (1 + 1e-6))
        nodes[1:] = pert / (pert.sum(axis=1, keepdims=True) * hd)
    free = list(range(1, L + 1))
    nodes, rep = newton_minimize(problem, nodes, free, scfg.max_iter, scfg.rtol)
    momenta, actions = problem.momenta(nodes)
    w2 = float(np.sum(actions) / L)
    resid = _continuity_residual(nodes, momenta, K, 1.0 / L)
    if not rep.converged:
        logger.warning("JKO step stopped after %d Newton iterations without convergence", rep.iterations)
    rho_next = nodes[-1].reshape(grid.shape)
    info = {
        "w2_step": w2,
        "entropy_before": entropy(r0.reshape(grid.shape), m, grid),
        "entropy_after": entropy(rho_next, m, grid),
        "iterations": rep.iterations,
        "converged": rep.converged,
        "residual": resid,
        "path": nodes.reshape((L + 1,) + grid.shape),
    }
    return rho_next, info


def jko_flow(rho0, K: KernelMatrix, cfg: JkoConfig, callback=None) -> Trajectory:
    """Run ``cfg.steps`` minimizing-movement steps from ``rho0``.

    ``callback(step, rho, diagnostics)`` is called for the initial density and
    after every step.  A failing step ends the run; the partial trajectory is
    returned with ``complete=False``.
    """
    grid = K.grid
    m = cfg.m
    r = _prepare(rho0, grid, m, cfg.solver, "rho0").reshape(grid.shape)
    if not math.isfinite(entropy(r, m, grid)):
        raise ValueError("initial entropy must be finite")
    traj = Trajectory(cfg.tau, [r], [_diagnostics(0, 0.0, r, K, m, 0.0, 0, 0.0)])
    if callback is not None:
        callback(0, r, traj.diagnostics[0])
    for n in range(1, cfg.steps + 1):
        try:
            r_next, info = jko_step(r, K, m, cfg)
        except (ValueError, np.linalg.LinAlgError) as exc:
            logger.error("JKO step %d failed: %s", n, exc)
            traj.complete = False
            break
        r = r_next
        diag = _diagnostics(n, n * cfg.tau, r, K, m, info["w2_step"], info["iterations"], info["residual"],
                            info["converged"])
        traj.snapshots.append(r)
        traj.diagnostics.append(diag)
        if callback is not None:
            callback(n, r, diag)
    return traj


def dissipation_check(traj: Trajectory):
    """Compare the discrete entropy decrease rate with the Fisher information.

    Returns a structured array with fields ``step``, ``decrease_rate``
    (``(U(rho^n) - U(rho^{n+1}))/tau``), ``fisher`` (at ``rho^n``) and ``ratio``.
    Nothing is asserted; the scheme only guarantees the energy inequality.
    """
    if len(traj.snapshots) < 3:
        raise ValueError("need at least three snapshots")
    ent = traj.column("entropy")
    fis = traj.column("fisher")
    rate = (ent[:-1] - ent[1:]) / traj.tau
    out = np.zeros(len(rate), dtype=[("step", int), ("decrease_rate", float), ("fisher", float), ("ratio", float)])
    out["step"] = np.arange(len(rate))
    out["decrease_rate"] = rate
    out["fisher"] = fis[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        out["ratio"] = np.where(fis[:-1] > 0, rate / fis[:-1], np.nan)
    return out
