import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homoclinic.grid import Discretization, lp_norm, make_grid, pointwise_norm


def test_spacing_and_nodes():
    g = make_grid(1.0, 3)
    assert g.h == pytest.approx(0.5)
    np.testing.assert_allclose(g.nodes, [-0.5, 0.0, 0.5])
    np.testing.assert_allclose(g.weights, [0.5, 0.5, 0.5])


@given(st.floats(0.5, 30.0), st.integers(3, 400))
def test_nodes_symmetric_and_inside(T, n):
    g = Discretization(T, n)
    np.testing.assert_array_equal(g.nodes, -g.nodes[::-1])
    assert g.nodes[0] > -T and g.nodes[-1] < T
    assert g.nodes[0] + T == pytest.approx(g.h)
    assert np.all(np.diff(g.nodes) > 0)


@pytest.mark.parametrize("T,n", [(0.0, 10), (-1.0, 10), (math.inf, 10), (1.0, 2), (1.0, 3.5)])
def test_invalid_grid(T, n):
    with pytest.raises(ValueError):
        Discretization(T, n)


def test_arrays_read_only():
    g = make_grid(2.0, 9)
    with pytest.raises(ValueError):
        g.nodes[0] = 1.0


def test_gaussian_l2_norm():
    # ||exp(-t^2)||_2 = (pi/2)^(1/4)
    g = make_grid(12.0, 4001)
    assert lp_norm(np.exp(-g.nodes ** 2), 2.0, g) == pytest.approx((math.pi / 2) ** 0.25, rel=1e-10)


def test_lp_norm_constant_and_sup():
    g = make_grid(1.0, 3)
    u = np.ones(3)
    assert lp_norm(u, 1.0, g) == pytest.approx(1.5)
    assert lp_norm(u, 2.0, g) == pytest.approx(math.sqrt(1.5))
    assert lp_norm(np.array([0.0, -3.0, 1.0]), math.inf, g) == 3.0
    assert lp_norm(np.zeros(3), 2.5, g) == 0.0


def test_lp_norm_rejects_small_p_and_bad_size():
    g = make_grid(1.0, 3)
    with pytest.raises(ValueError):
        lp_norm(np.ones(3), 0.5, g)
    with pytest.raises(ValueError):
        lp_norm(np.ones(4), 2.0, g)


def test_lp_norm_large_values_do_not_overflow():
    g = make_grid(1.0, 3)
    assert lp_norm(np.full(3, 1e200), 4.0, g) == pytest.approx(1e200 * 1.5 ** 0.25)


def test_pointwise_norm_vector_field():
    u = np.array([3.0, 4.0, 0.0, -2.0])
    np.testing.assert_allclose(pointwise_norm(u, 2), [5.0, 2.0])


@settings(max_examples=30)
@given(st.integers(3, 200), st.floats(1.1, 3.0), st.integers(1, 3))
def test_widen_embed_restrict(n, factor, dim):
    g = make_grid(5.0, n)
    w = g.widened(factor)
    assert w.h == pytest.approx(g.h, rel=1e-12)
    pad = (w.n_interior - n) // 2
    np.testing.assert_allclose(w.nodes[pad:pad + n], g.nodes, atol=1e-12)
    u = np.random.default_rng(n).standard_normal(n * dim)
    big = g.embed(u, w, dim)
    assert np.count_nonzero(big) == np.count_nonzero(u)
    np.testing.assert_array_equal(g.restrict(big, w, dim), u)


def test_widen_rejects_shrinking():
    with pytest.raises(ValueError):
        make_grid(1.0, 5).widened(0.5)
