import numpy as np
import pytest
from hypothesis import given, strategies as st

from effmed.kernels import (LatticeConvolution, ball_newtonian_potential, ball_volume, green, pairwise_apply,
                            pairwise_kernel_matrix)
from oracles import ball_potential_quadrature


def test_ball_potential_exterior_example():
    assert ball_newtonian_potential([2.0, 0, 0], [0, 0, 0], 1.0) == pytest.approx(2.094395, rel=1e-6)


def test_ball_potential_center_example():
    assert ball_newtonian_potential([0.0, 0, 0], [0, 0, 0], 1.0) == pytest.approx(6.283185, rel=1e-6)


def test_ball_potential_surface_example():
    assert ball_newtonian_potential([0.0, 1.0, 0], [0, 0, 0], 1.0) == pytest.approx(4.18879, rel=1e-6)


def test_ball_potential_matches_quadrature():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = rng.uniform(0.1, 1.5)
        c = rng.normal(size=3)
        x = c + rng.normal(size=3) * a
        ref = ball_potential_quadrature(x, c, a)
        assert ball_newtonian_potential(x, c, a) == pytest.approx(ref, rel=1e-6)


@given(st.floats(1e-3, 1e3))
def test_ball_potential_continuous_at_surface(a):
    c = np.zeros(3)
    x_out = np.array([a, 0, 0])
    inner = 2 * np.pi * (a**2 - a**2 / 3)
    outer = float(ball_volume(a)) / a
    assert abs(inner - outer) < 1e-12 * outer
    assert ball_newtonian_potential(x_out, c, a) == pytest.approx(outer, rel=1e-14)


def test_ball_potential_broadcasts():
    x = np.zeros((4, 1, 3))
    c = np.array([[0, 0, 0], [3, 0, 0]], float)[None]
    v = ball_newtonian_potential(x, c, 1.0)
    assert v.shape == (4, 2)
    np.testing.assert_allclose(v[:, 1], float(ball_volume(1.0)) / 3)


def test_green_values():
    assert green(0.0, 1.0) == pytest.approx(1 / (4 * np.pi))
    assert green(np.pi, 1.0) == pytest.approx(-1 / (4 * np.pi))


def test_pairwise_matrix_skips_coincident_points():
    pts = np.array([[0, 0, 0], [1, 0, 0]], float)
    m = pairwise_kernel_matrix(2.0, pts, pts)
    assert m[0, 0] == 0 and m[1, 1] == 0
    assert m[0, 1] == pytest.approx(green(2.0, 1.0))


def _lattice_points(shape, h, origin=(0.3, -0.1, 0.2)):
    g = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    idx = np.stack([x.ravel() for x in g], -1)
    return np.asarray(origin) + idx * np.asarray(h)


def test_lattice_convolution_matches_direct_sum():
    shape, h, k = (5, 4, 3), np.array([0.1, 0.15, 0.2]), 3.0
    pts = _lattice_points(shape, h)
    rng = np.random.default_rng(2)
    v = rng.normal(size=len(pts)) + 1j * rng.normal(size=len(pts))
    conv = LatticeConvolution(shape, h, k, scale=2.0, self_value=0.7)
    direct = 2.0 * pairwise_kernel_matrix(k, pts, pts) @ v + 0.7 * v
    np.testing.assert_allclose(conv(v).ravel(), direct, rtol=1e-12, atol=1e-12 * np.abs(direct).max())


def test_lattice_convolution_independent_of_threads(monkeypatch):
    shape, h = (6, 6, 6), np.full(3, 0.1)
    v = np.random.default_rng(0).normal(size=shape).astype(complex)
    monkeypatch.setenv("EFFMED_THREADS", "1")
    a = LatticeConvolution(shape, h, 1.0)(v)
    monkeypatch.setenv("EFFMED_THREADS", "4")
    b = LatticeConvolution(shape, h, 1.0)(v)
    assert np.array_equal(a, b)


def test_pairwise_apply_matches_matrix():
    rng = np.random.default_rng(4)
    pts = rng.uniform(size=(37, 3))
    v = rng.normal(size=37) + 0j
    np.testing.assert_allclose(pairwise_apply(1.5, pts, pts, v, chunk=8),
                               pairwise_kernel_matrix(1.5, pts, pts) @ v, rtol=1e-13)
