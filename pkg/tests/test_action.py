import math

import numpy as np
import pytest

from fpme.action import action, action_gradients, transport_estimate
from fpme.grid import Grid, PairField
from fpme.kernel import kernel_matrix


def _antisym(rng, N):
    A = rng.standard_normal((N, N))
    return A - A.T


@pytest.fixture(scope="module")
def K8():
    return kernel_matrix(Grid(1, 8), 0.5)


def test_zero_momentum(K8, make_density):
    res = action(make_density(K8.grid), np.zeros((8, 8)), K8, 1.0)
    assert res.finite and res.value == 0.0


def test_two_cell_hand_expansion():
    g = Grid(1, 2)
    K = kernel_matrix(g, 0.5)
    v = 0.7
    V = np.array([[0.0, v], [-v, 0.0]])
    expected = v**2 * K.values[0, 1] * g.h**2
    for m in (0.5, 1.0, 2.0):
        assert math.isclose(float(action(np.ones(2), V, K, m)), expected, rel_tol=1e-15)


@pytest.mark.parametrize("m", [0.5, 1.0, 1.5, 2.0])
def test_two_homogeneous_in_momentum(K8, rng, make_density, m):
    rho, V = make_density(K8.grid), _antisym(rng, 8)
    assert math.isclose(float(action(rho, 2 * V, K8, m)), 4 * float(action(rho, V, K8, m)), rel_tol=1e-14)


@pytest.mark.parametrize("m", [0.5, 1.0, 1.5, 2.0])
def test_jointly_one_homogeneous(K8, rng, make_density, m):
    rho, V = make_density(K8.grid), _antisym(rng, 8)
    lam = 3.7
    assert math.isclose(float(action(lam * rho, lam * V, K8, m)), lam * float(action(rho, V, K8, m)), rel_tol=1e-13)


@pytest.mark.parametrize("m", [0.5, 1.0, 1.5, 2.0])
def test_joint_convexity(K8, rng, make_density, m):
    for _ in range(20):
        r0, r1 = make_density(K8.grid, 0.01), make_density(K8.grid, 0.01)
        V0, V1 = _antisym(rng, 8), _antisym(rng, 8)
        t = rng.uniform(0.05, 0.95)
        mid = float(action((1 - t) * r0 + t * r1, (1 - t) * V0 + t * V1, K8, m))
        assert mid <= (1 - t) * float(action(r0, V0, K8, m)) + t * float(action(r1, V1, K8, m)) + 1e-10


def test_infinite_sentinel_on_vacuum():
    K = kernel_matrix(Grid(1, 4), 0.5)
    rho = np.array([0.0, 0.0, 2.0, 2.0])
    V = np.zeros((4, 4))
    V[0, 1], V[1, 0] = 1.0, -1.0
    res = action(rho, V, K, 1.0)
    assert not res.finite and float(res) == math.inf
    # for m > 1 the mean is positive unless both values vanish
    V2 = np.zeros((4, 4))
    V2[0, 2], V2[2, 0] = 1.0, -1.0
    assert action(rho, V2, K, 2.0).finite
    assert not action(rho, V2, K, 1.0).finite


def test_pair_field_input_and_grid_check(K8, rng, make_density):
    rho, V = make_density(K8.grid), _antisym(rng, 8)
    assert float(action(rho, PairField.from_dense(K8.grid, V), K8, 1.0)) == float(action(rho, V, K8, 1.0))
    with pytest.raises(ValueError):
        action(rho, PairField.from_dense(Grid(1, 4), np.zeros((4, 4))), K8, 1.0)
    with pytest.raises(ValueError):
        action(np.ones(4), V, K8, 1.0)


@pytest.mark.parametrize("m", [0.5, 1.0, 1.5, 2.0])
def test_gradients_match_finite_differences(rng, make_density, m):
    K = kernel_matrix(Grid(1, 6), 0.5)
    rho, V = make_density(K.grid), _antisym(rng, 6)
    g_rho, g_V = action_gradients(rho, V, K, m)
    h = 1e-6
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        fd = (float(action(rho + e, V, K, m)) - float(action(rho - e, V, K, m))) / (2 * h)
        assert math.isclose(g_rho[i], fd, rel_tol=1e-5, abs_tol=1e-10)
    packed = PairField.from_dense(K.grid, V)
    for k in range(len(packed.values)):
        plus, minus = packed.values.copy(), packed.values.copy()
        plus[k] += h
        minus[k] -= h
        fd = (float(action(rho, PairField(K.grid, plus), K, m))
              - float(action(rho, PairField(K.grid, minus), K, m))) / (2 * h)
        assert math.isclose(g_V.values[k], fd, rel_tol=1e-5, abs_tol=1e-10)
    assert np.all(g_rho <= 0)


def test_gradients_zero_momentum_and_vacuum(K8, make_density):
    g_rho, g_V = action_gradients(make_density(K8.grid), np.zeros((8, 8)), K8, 1.0)
    assert not g_rho.any() and not g_V.values.any()
    rho = np.ones(8)
    rho[0] = 0.0
    V = np.zeros((8, 8))
    V[0, 1], V[1, 0] = 1.0, -1.0
    with pytest.raises(ValueError):
        action_gradients(rho, V, K8, 1.0)


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0])
def test_transport_estimate(rng, make_density, m):
    K = kernel_matrix(Grid(1, 16), 0.5)
    assert transport_estimate(np.ones(16), np.zeros((16, 16)), K, m) == (0.0, 0.0)
    for _ in range(200):
        rho, V = make_density(K.grid, 0.01), _antisym(rng, 16)
        lhs, rhs = transport_estimate(rho, V, K, m)
        assert lhs <= rhs
    lhs1, rhs1 = transport_estimate(rho, V, K, m)
    lhs3, rhs3 = transport_estimate(rho, 3 * V, K, m)
    assert math.isclose(lhs3, 3 * lhs1, rel_tol=1e-13) and math.isclose(rhs3, 3 * rhs1, rel_tol=1e-13)
