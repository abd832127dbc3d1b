import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpme.grid import (
    Grid,
    PairField,
    discrete_divergence,
    discrete_gradient,
    make_grid,
    mass,
    normalize,
    torus_distance,
)

coords = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)


def test_make_grid_1d_centres():
    g = make_grid(1, 4)
    assert g.h == 0.25
    np.testing.assert_array_equal(g.centers[:, 0], [0.0, 0.25, 0.5, 0.75])


def test_make_grid_2d_counts():
    g = make_grid(2, 3)
    assert g.size == 9
    assert g.shape == (3, 3)
    assert math.isclose(g.h, 1 / 3)
    assert math.isclose(g.cell_volume, 1 / 9)


@pytest.mark.parametrize("d, n, msg", [(3, 4, "unsupported dimension"), (1, 1, "at least 2"), (0, 4, "unsupported")])
def test_make_grid_rejects(d, n, msg):
    with pytest.raises(ValueError, match=msg):
        make_grid(d, n)


def test_from_shape_rejects_rectangles():
    with pytest.raises(ValueError):
        Grid.from_shape((4, 5))


def test_torus_distance_examples():
    assert math.isclose(torus_distance(0.9, 0.1), 0.2)
    assert torus_distance(0.3, 0.3) == 0.0
    assert math.isclose(torus_distance([0.95, 0.95], [0.05, 0.05]), math.sqrt(0.02))


@settings(max_examples=200, deadline=None)
@given(st.tuples(coords, coords), st.tuples(coords, coords), st.tuples(coords, coords))
def test_torus_distance_is_metric(x, y, z):
    dxy = torus_distance(x, y)
    assert dxy == torus_distance(y, x)
    assert 0.0 <= dxy <= math.sqrt(2) / 2 + 1e-15
    assert torus_distance(x, z) <= dxy + torus_distance(y, z) + 1e-15


def test_distance_matrix_against_brute_force_shifts():
    g = Grid(2, 5)
    x = g.centers
    brute = np.full((g.size, g.size), np.inf)
    for k1 in (-1, 0, 1):
        for k2 in (-1, 0, 1):
            diff = x[:, None, :] - x[None, :, :] + np.array([k1, k2])
            brute = np.minimum(brute, np.linalg.norm(diff, axis=-1))
    np.testing.assert_allclose(g.distance_matrix, brute, atol=1e-15)


def test_gradient_two_cells():
    G = discrete_gradient([0.0, 1.0])
    assert G[0, 1] == 1.0 and G[1, 0] == -1.0


def test_gradient_constant_and_linear(rng):
    assert not discrete_gradient(np.full(7, 3.2)).any()
    a, b = rng.standard_normal(2)
    psi, chi = rng.standard_normal((2, 9))
    np.testing.assert_allclose(
        discrete_gradient(a * psi + b * chi), a * discrete_gradient(psi) + b * discrete_gradient(chi), atol=1e-14
    )


def test_gradient_lipschitz_bound():
    g = Grid(1, 32)
    x = g.centers[:, 0]
    phi = np.sin(2 * np.pi * x)  # Lipschitz constant 2 pi on the circle
    assert np.all(np.abs(discrete_gradient(phi)) <= 2 * np.pi * g.distance_matrix + 1e-12)


def test_divergence_zero_and_mass(kernel_cache, rng):
    K = kernel_cache(1, 16)
    assert not discrete_divergence(np.zeros((16, 16)), K).any()
    A = rng.standard_normal((16, 16))
    div = discrete_divergence(A - A.T, K)
    assert abs(div.sum() * K.grid.cell_volume) < 1e-12


@pytest.mark.parametrize("d, n", [(1, 12), (2, 4)])
def test_duality_against_double_sum(kernel_cache, rng, d, n):
    K = kernel_cache(d, n)
    g = K.grid
    phi = rng.standard_normal(g.size)
    A = rng.standard_normal((g.size, g.size))
    V = A - A.T
    pairing = 0.0
    for i in range(g.size):
        for j in range(g.size):
            if i != j:
                pairing += (phi[j] - phi[i]) * V[i, j] * K.values[i, j]
    pairing *= 0.5 * g.cell_volume**2
    lhs = float(phi @ discrete_divergence(V, K).ravel()) * g.cell_volume
    assert abs(lhs + pairing) <= 1e-12


def test_divergence_grid_mismatch(kernel_cache):
    with pytest.raises(ValueError):
        discrete_divergence(np.zeros((8, 8)), kernel_cache(1, 16))


def test_normalize():
    np.testing.assert_array_equal(normalize(np.full(5, 3.0)), np.ones(5))
    r = normalize(np.arange(1.0, 9.0))
    np.testing.assert_allclose(normalize(r), r, rtol=0, atol=1e-15)
    assert abs(mass(r) - 1) < 1e-12
    with pytest.raises(ValueError):
        normalize(np.zeros(4))
    with pytest.raises(ValueError):
        normalize(np.array([1.0, -1.0, 2.0]))


def test_pair_field_roundtrip(rng):
    g = Grid(1, 6)
    A = rng.standard_normal((6, 6))
    V = A - A.T
    pf = PairField.from_dense(g, V)
    assert pf.values.shape == (15,)
    np.testing.assert_array_equal(pf.dense(), V)
    np.testing.assert_array_equal(pf.dense(), -pf.dense().T)
