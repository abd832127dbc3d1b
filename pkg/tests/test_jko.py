import math

import numpy as np
import pytest

from fpme import jko as jko_module
from fpme.grid import Grid, mass
from fpme.jko import JkoConfig, dissipation_check, jko_flow, jko_step, phi
from fpme.kernel import kernel_matrix
from fpme.means import entropy
from fpme.oracles import integrate_semidiscrete, spectral_heat_flow
from fpme.transport import SolverConfig


@pytest.fixture(scope="module")
def K32():
    return kernel_matrix(Grid(1, 32), 0.5)


@pytest.fixture(scope="module")
def K64():
    return kernel_matrix(Grid(1, 64), 0.5)


def cosine(grid):
    return 1 + 0.5 * np.cos(2 * np.pi * grid.centers[:, 0])


def bump(grid, width=0.05):
    x = grid.centers[:, 0]
    r = sum(np.exp(-((x - 0.5 + k) ** 2) / (2 * width**2)) for k in (-1, 0, 1))
    return r / (r.sum() * grid.h)


def test_config_validation():
    with pytest.raises(ValueError):
        JkoConfig(0.0, 3, 1.0)
    with pytest.raises(ValueError):
        JkoConfig(1e-3, 0, 1.0)
    assert JkoConfig(1e-3, 1, 1.0).solver.n_intervals == 8


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0])
def test_uniform_fixed_point(K32, m):
    rho, info = jko_step(np.ones(32), K32, m, JkoConfig(1e-3, 1, m))
    assert np.abs(rho - 1).max() <= 1e-6
    assert info["w2_step"] <= 1e-12


@pytest.mark.parametrize("m", [0.5, 1.0, 1.5, 2.0])
def test_energy_inequality_and_monotone_entropy(K32, m):
    tau = 2e-3
    traj = jko_flow(cosine(K32.grid), K32, JkoConfig(tau, 6, m))
    assert traj.complete
    ent, w2 = traj.column("entropy"), traj.column("w2_step")
    assert np.all(ent[1:] + w2[1:] / (2 * tau) <= ent[:-1] + 1e-6)
    assert np.all(np.diff(ent) <= 0)
    assert np.all(np.abs(traj.column("mass") - 1) <= 1e-9)
    assert np.all(traj.column("min_density") > 0)
    assert np.all(np.diff(traj.times) > 0)
    assert traj.column("residual").max() <= 1e-9


def test_phi_contract(K32):
    g = K32.grid
    rho = cosine(g)
    tau = 5e-3
    assert math.isclose(phi(tau, rho, rho, K32, 1.0), entropy(rho, 1.0, g), rel_tol=1e-12)
    nxt, _ = jko_step(rho, K32, 1.0, JkoConfig(tau, 1, 1.0))
    nxt = nxt / mass(nxt, g)
    assert phi(tau, rho, nxt, K32, 1.0) <= phi(tau, rho, rho, K32, 1.0)
    assert phi(tau, rho, nxt, K32, 1.0) >= 0.0


def test_single_step_against_spectral_flow(K64):
    g = K64.grid
    rho0 = cosine(g)
    rho1, info = jko_step(rho0, K64, 1.0, JkoConfig(1e-3, 1, 1.0))
    assert info["converged"]
    assert np.abs(rho1 - spectral_heat_flow(rho0, 0.5, 1e-3)).sum() * g.h <= 0.01


def test_minimizer_independent_of_initialisation(K32):
    rho0 = cosine(K32.grid)
    base, _ = jko_step(rho0, K32, 1.0, JkoConfig(1e-2, 1, 1.0))
    for seed in (1, 2):
        cfg = JkoConfig(1e-2, 1, 1.0, SolverConfig(n_intervals=8, init="random", seed=seed))
        other, _ = jko_step(rho0, K32, 1.0, cfg)
        assert np.abs(other - base).sum() * K32.grid.h <= 1e-5


def test_inner_intervals_eight_against_sixteen(K32):
    rho0 = cosine(K32.grid)
    a, ia = jko_step(rho0, K32, 2.0, JkoConfig(1e-2, 1, 2.0))
    b, ib = jko_step(rho0, K32, 2.0, JkoConfig(1e-2, 1, 2.0, SolverConfig(n_intervals=16)))
    assert np.abs(a - b).sum() * K32.grid.h <= 1e-6
    assert abs(ia["w2_step"] / ib["w2_step"] - 1) <= 1e-3


def test_tau_refinement_gaps_shrink(K32):
    rho0 = cosine(K32.grid)
    t = 0.04
    trajs = [jko_flow(rho0, K32, JkoConfig(tau, int(round(t / tau)), 2.0)) for tau in (8e-3, 4e-3, 2e-3, 1e-3)]
    ends = [tr.at(t) for tr in trajs]
    gaps = [np.abs(a - b).sum() * K32.grid.h for a, b in zip(ends, ends[1:])]
    assert gaps[0] > gaps[1] > gaps[2]


def test_bump_spreads_and_tracks_ode(K64):
    g = K64.grid
    rho0 = bump(g)
    x = g.centers[:, 0]
    ref = integrate_semidiscrete(rho0, 2.0, K64, 0.05)
    gaps = []
    for tau in (4e-3, 2e-3, 1e-3):
        traj = jko_flow(rho0, K64, JkoConfig(tau, int(math.floor(0.05 / tau + 1e-9)), 2.0))
        spread = [float(np.sum((x - 0.5) ** 2 * s) * g.h) for s in traj.snapshots]
        assert np.all(np.diff(spread) > 0)
        gaps.append(np.abs(traj.at(0.05) - ref).sum() * g.h)
    assert gaps[-1] <= 0.05
    assert gaps[0] > gaps[1] > gaps[2]


def test_dissipation_report(K32):
    uni = jko_flow(np.ones(32), K32, JkoConfig(1e-3, 3, 1.0))
    rep = dissipation_check(uni)
    assert np.allclose(rep["decrease_rate"], 0, atol=1e-9) and np.allclose(rep["fisher"], 0)
    ratios = []
    for tau in (4e-3, 2e-3, 1e-3):
        rep = dissipation_check(jko_flow(cosine(K32.grid), K32, JkoConfig(tau, 3, 1.0)))
        assert np.all(rep["decrease_rate"] >= 0) and np.all(rep["fisher"] >= 0)
        ratios.append(float(rep["ratio"][0]))
    assert abs(ratios[2] - 1) < abs(ratios[1] - 1) < abs(ratios[0] - 1)
    with pytest.raises(ValueError):
        dissipation_check(jko_flow(np.ones(32), K32, JkoConfig(1e-3, 1, 1.0)))


def test_flow_failure_returns_partial(K32, monkeypatch):
    real = jko_module.jko_step
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise np.linalg.LinAlgError("singular")
        return real(*args, **kwargs)

    monkeypatch.setattr(jko_module, "jko_step", flaky)
    traj = jko_flow(cosine(K32.grid), K32, JkoConfig(1e-3, 5, 2.0))
    assert not traj.complete
    assert len(traj.snapshots) == 3


def test_callback_sees_every_snapshot(K32):
    seen = []
    jko_flow(cosine(K32.grid), K32, JkoConfig(1e-3, 4, 2.0), callback=lambda n, rho, d: seen.append((n, d.step)))
    assert seen == [(k, k) for k in range(5)]


def test_interpolant_is_piecewise_constant(K32):
    traj = jko_flow(cosine(K32.grid), K32, JkoConfig(1e-2, 3, 2.0))
    assert traj.at(0.0) is traj.snapshots[0]
    assert traj.at(0.0199) is traj.snapshots[1]
    assert traj.at(0.02) is traj.snapshots[2]
    assert traj.at(5.0) is traj.snapshots[-1]
