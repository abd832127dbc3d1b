"""Command line entry point ``fpme``.

Exit codes: 0 on success, 1 on usage or input errors, 2 when ``validate``
reports a failing check.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from ._validation import check_exponent
from .grid import Grid, normalize
from .io import FormatError, RunManifest, load_density, load_kernel, store_density, store_kernel
from .jko import DIAGNOSTIC_COLUMNS, JkoConfig, jko_flow
from .kernel import KernelConfig, kernel_matrix
from .oracles import integrate_semidiscrete, spectral_heat_flow
from .transport import MASS_TOL, SolverConfig, solve_distance, speed_flatness
from .validate import format_table, run_suite

logger = logging.getLogger("fpme")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _versions():
    return {"fpme": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": sys.version.split()[0]}


def _kernel_meta(K):
    return {"sigma": K.sigma, "radius": K.config.radius, "tail_correction": K.config.tail_correction,
            "C_comp_estimate": K.comp_constant}


def initial_density(source: str, grid: Grid, width: float = 0.05) -> np.ndarray:
    """Built-in initial data: ``uniform``, ``cosine``, ``bump`` or ``file:PATH``."""
    if source.startswith("file:"):
        rho, file_grid = load_density(source[5:], return_grid=True)
        if file_grid != grid:
            raise UsageError(f"{source[5:]} holds a d={file_grid.d}, n={file_grid.n} field, expected d={grid.d}, "
                             f"n={grid.n}")
        return rho
    x = grid.centers
    if source == "uniform":
        return np.ones(grid.shape)
    if source == "cosine":
        return (1.0 + 0.5 * np.cos(2 * np.pi * x[:, 0])).reshape(grid.shape)
    if source == "bump":
        if width <= 0:
            raise UsageError("--width must be positive")
        # periodic images within three box lengths
        shifts = np.arange(-3, 4)
        total = np.zeros(grid.size)
        center = np.full(grid.d, 0.5)
        for k in np.stack(np.meshgrid(*[shifts] * grid.d, indexing="ij"), -1).reshape(-1, grid.d):
            total += np.exp(-np.sum((x - center + k) ** 2, axis=1) / (2 * width**2))
        return normalize(total.reshape(grid.shape), grid)
    raise UsageError(f"unknown initial condition {source!r}; use uniform, cosine, bump or file:PATH")


def _grid_args(p, dims=True):
    if dims:
        p.add_argument("--dim", type=int, default=1, help="spatial dimension (1 or 2)")
        p.add_argument("--n", type=int, default=64, help="cells per axis")
    p.add_argument("--sigma", type=float, default=0.5, help="fractional order in (0, 1)")
    p.add_argument("--radius", type=int, default=8, help="lattice-sum truncation radius")
    p.add_argument("--no-tail-correction", action="store_true", help="drop the lattice tail estimate")


def _kernel_from(args, grid):
    cfg = KernelConfig(radius=args.radius, tail_correction=not args.no_tail_correction)
    return kernel_matrix(grid, args.sigma, cfg)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fpme", description="Non-local transport and fractional porous medium flows on the torus.")
    p.add_argument("--version", action="version", version=f"fpme {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("kernel", help="assemble and store the kernel matrix")
    _grid_args(k)
    k.add_argument("--out", required=True, help="output file (FPME binary; sidecar FILE.json)")

    for name, hlp in (("distance", "transport distance between two densities"),
                      ("geodesic", "geodesic between two densities")):
        d = sub.add_parser(name, help=hlp)
        d.add_argument("--rho0", required=True)
        d.add_argument("--rho1", required=True)
        d.add_argument("--kernel", help="kernel file; assembled from --sigma/--radius when absent")
        _grid_args(d, dims=False)
        d.add_argument("--m", type=float, default=2.0)
        d.add_argument("--time-steps", type=int, default=16)
        d.add_argument("--tol", type=float, default=1e-9)
        d.add_argument("--strict", action="store_true", help="reject m at or below the critical exponent")
        if name == "distance":
            d.add_argument("--path-out", help="directory for the path snapshots")
        else:
            d.add_argument("--out", required=True, help="directory for the path snapshots")

    j = sub.add_parser("jko", help="minimizing-movement flow")
    j.add_argument("--init", default="cosine")
    j.add_argument("--width", type=float, default=0.05, help="bump width")
    _grid_args(j)
    j.add_argument("--m", type=float, default=2.0)
    j.add_argument("--tau", type=float, default=1e-3)
    j.add_argument("--steps", type=int, default=10)
    j.add_argument("--time-steps", type=int, default=8, help="intervals of each step's path")
    j.add_argument("--strict", action="store_true")
    j.add_argument("--out", required=True)

    o = sub.add_parser("oracle", help="reference solutions")
    osub = o.add_subparsers(dest="oracle", required=True, parser_class=_Parser)
    h = osub.add_parser("heat", help="spectral fractional heat flow")
    o2 = osub.add_parser("ode", help="RK4 semidiscrete porous medium flow")
    for q in (h, o2):
        q.add_argument("--init", default="cosine")
        q.add_argument("--width", type=float, default=0.05)
        _grid_args(q)
        q.add_argument("--t", type=float, required=True)
        q.add_argument("--out", required=True)
    o2.add_argument("--m", type=float, default=2.0)
    o2.add_argument("--dt", type=float, default=None)

    v = sub.add_parser("validate", help="run the self-check suite")
    v.add_argument("--quick", action="store_true")
    v.add_argument("--seed", type=int, default=0)
    return p


def _load_pair(args):
    rho0, g0 = load_density(args.rho0, return_grid=True)
    rho1, g1 = load_density(args.rho1, return_grid=True)
    if g0 != g1:
        raise UsageError("rho0 and rho1 live on different grids")
    for name, rho in (("rho0", rho0), ("rho1", rho1)):
        total = float(rho.sum() * g0.cell_volume)
        if abs(total - 1.0) > MASS_TOL:
            raise UsageError(f"mass mismatch: {name} has mass {total:.12g}, expected 1")
    if args.kernel:
        K = load_kernel(args.kernel)
        if K.grid != g0:
            raise UsageError("kernel grid does not match the densities")
    else:
        K = _kernel_from(args, g0)
    check_exponent(args.m, K.sigma, g0.d, strict=args.strict)
    return rho0, rho1, K


def _write_path(result, out, grid):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for k, rho in enumerate(result.densities):
        store_density(rho, out / f"step_{k:06d}.fpme", grid)
    return out


def _cmd_kernel(args, ctx):
    grid = Grid(args.dim, args.n)
    K = _kernel_from(args, grid)
    ctx["kernel"] = _kernel_meta(K)
    path, side = store_kernel(K, args.out)
    ctx["manifest"] = Path(str(path) + ".manifest.json")
    print(json.dumps({"kernel": str(path), "metadata": str(side), **ctx["kernel"]}))


def _cmd_distance(args, ctx, geodesic=False):
    rho0, rho1, K = _load_pair(args)
    ctx["kernel"] = _kernel_meta(K)
    cfg = SolverConfig(n_intervals=args.time_steps, tol=args.tol)
    ctx["solver"] = asdict(cfg)
    res = solve_distance(rho0, rho1, K, args.m, cfg)
    summary = res.summary()
    out = args.out if geodesic else args.path_out
    if geodesic:
        summary["flatness"] = speed_flatness(res)
    if out:
        _write_path(res, out, K.grid)
        ctx["manifest"] = Path(out) / "manifest.json"
    print(json.dumps(summary))


def _cmd_jko(args, ctx):
    grid = Grid(args.dim, args.n)
    check_exponent(args.m, args.sigma, grid.d, strict=args.strict)
    rho0 = initial_density(args.init, grid, args.width)
    K = _kernel_from(args, grid)
    ctx["kernel"] = _kernel_meta(K)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx["manifest"] = out / "manifest.json"
    cfg = JkoConfig(args.tau, args.steps, args.m, SolverConfig(n_intervals=args.time_steps))
    ctx["solver"] = asdict(cfg.solver)
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIAGNOSTIC_COLUMNS)

        def record(n, rho, diag):
            store_density(rho, out / f"step_{n:06d}.fpme", grid)
            writer.writerow(diag.row())
            fh.flush()

        traj = jko_flow(rho0, K, cfg, callback=record)
    print(json.dumps({"steps": len(traj.snapshots) - 1, "complete": traj.complete,
                      "final_entropy": traj.diagnostics[-1].entropy}))
    if not traj.complete:
        raise RuntimeError("flow stopped early; partial trajectory written")


def _cmd_oracle(args, ctx):
    grid = Grid(args.dim, args.n)
    rho0 = initial_density(args.init, grid, args.width)
    if args.oracle == "heat":
        rho = spectral_heat_flow(rho0, args.sigma, args.t, grid)
    else:
        check_exponent(args.m, args.sigma, grid.d)
        K = _kernel_from(args, grid)
        rho = integrate_semidiscrete(rho0, args.m, K, args.t, args.dt)
        ctx["kernel"] = _kernel_meta(K)
    path = store_density(rho, args.out, grid)
    ctx["manifest"] = Path(str(path) + ".manifest.json")
    print(json.dumps({"out": str(path), "mass": float(rho.sum() * grid.cell_volume)}))


def _config_echo(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def run(argv=None) -> int:
    """Parse ``argv`` and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("FPME_THREADS")
    limiter = threadpool_limits(limits=int(threads)) if threads else contextlib.nullcontext()
    start = time.perf_counter()
    with limiter:
        if args.command == "validate":
            results = run_suite(quick=args.quick, seed=args.seed)
            print(format_table(results))
            return 0 if all(r.passed for r in results) else 2
        handlers = {
            "kernel": _cmd_kernel,
            "distance": _cmd_distance,
            "geodesic": lambda a, c: _cmd_distance(a, c, geodesic=True),
            "jko": _cmd_jko,
            "oracle": _cmd_oracle,
        }
        status = 0
        ctx = {"manifest": None, "kernel": {}}
        try:
            handlers[args.command](args, ctx)
        except (UsageError, FormatError, ValueError, FileNotFoundError, FloatingPointError, RuntimeError) as exc:
            print(f"fpme {args.command}: {exc}", file=sys.stderr)
            status = 1
        if ctx["manifest"] is not None:
            RunManifest(
                command=args.command,
                config={**_config_echo(args), **({"solver": ctx["solver"]} if "solver" in ctx else {})},
                kernel=ctx["kernel"],
                versions=_versions(),
                wall_clock=time.perf_counter() - start,
                exit_status=status,
            ).write(ctx["manifest"])
        return status


def main(argv=None):
    sys.exit(run(argv))
