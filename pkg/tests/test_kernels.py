import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from confdeficit import _kernels

compiled = pytest.mark.skipif(_kernels.BACKEND != "compiled", reason="extension not built")


def test_winding_numbers_of_sphere_mesh(mesh2):
    tri = mesh2.nodes[mesh2.faces]
    ys = np.array([[0.0, 0.0, 0.0], [0.3, -0.2, 0.5], [2.0, 0.0, 0.0], [0.0, 0.0, -1.7]])
    w = _kernels.winding_numbers_numpy(tri, ys)
    assert np.allclose(w, [1, 1, 0, 0], atol=1e-10)


def test_winding_numbers_reverse_with_orientation(mesh2):
    tri = mesh2.nodes[mesh2.faces][:, ::-1]
    assert _kernels.winding_numbers_numpy(tri, np.zeros((1, 3)))[0] == pytest.approx(-1.0)


def test_ball_sums_oracle():
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [2.0, 0.0]])
    mass = np.array([1.0, 2.0, 4.0])
    out = _kernels.ball_sums_numpy(pts, mass, np.array([[0.0, 0.0], [2.0, 0.1]]), 1.0)
    assert np.allclose(out, [3.0, 4.0])


@compiled
def test_compiled_winding_matches_numpy(mesh2, rng):
    tri = mesh2.nodes[mesh2.faces]
    ys = rng.uniform(-1.5, 1.5, size=(40, 3))
    assert np.allclose(_kernels.winding_numbers(tri, ys), _kernels.winding_numbers_numpy(tri, ys), atol=1e-12)


@compiled
@given(st.integers(0, 2**31), st.integers(1, 4), st.floats(0.05, 3.0))
def test_compiled_ball_sums_match_numpy(seed, d, radius):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(300, d))
    mass = rng.random(300)
    centers = rng.normal(size=(7, d))
    a = _kernels.ball_sums(pts, mass, centers, radius)
    b = _kernels.ball_sums_numpy(pts, mass, centers, radius)
    assert np.allclose(a, b, atol=1e-12)


def test_tangent_gradient_matches_moebius_jacobian(mesh2):
    from confdeficit.moebius import MoebiusTransform

    phi = MoebiusTransform.from_boost(np.array([0.4, -0.3, 0.2]))
    x = mesh2.points
    ref = np.matmul(phi.jacobian(x), mesh2.frames)
    got = _kernels.moebius_tangent_gradient(x, mesh2.frames, phi.xi, phi.lam)
    assert np.allclose(got, ref, atol=1e-13)


def test_fit_misfit_vanishes_on_the_map_itself(mesh2):
    from confdeficit.moebius import MoebiusTransform

    O = np.linalg.qr(np.random.default_rng(2).normal(size=(3, 3)))[0]
    phi = MoebiusTransform.from_boost(np.array([0.1, 0.5, -0.2]), O)
    x, F, w = mesh2.points, mesh2.frames, mesh2.weights
    target = np.matmul(phi.jacobian(x), F)
    assert _kernels.moebius_fit_misfit_numpy(x, F, target, w, phi.xi, phi.lam, O, 1.0) < 1e-28


def _fit_inputs(chart_or_mesh, seed):
    rng = np.random.default_rng(seed)
    x = np.ascontiguousarray(chart_or_mesh.points[::7])
    F = np.ascontiguousarray(chart_or_mesh.frames[::7])
    target = rng.normal(size=F.shape)
    w = rng.random(x.shape[0])
    xi = rng.normal(size=x.shape[1])
    xi /= np.linalg.norm(xi)
    O = np.linalg.qr(rng.normal(size=(x.shape[1],) * 2))[0]
    return rng, x, F, target, w, xi, O


@compiled
@given(st.integers(0, 2**31), st.floats(0.2, 5.0), st.sampled_from([0.5, 1.0, 1.5]))
def test_compiled_fit_kernels_match_numpy(mesh2, chart4, seed, lam, power):
    for dom in (mesh2, chart4):
        _, x, F, target, w, xi, O = _fit_inputs(dom, seed)
        wt = np.ascontiguousarray(w[:, None, None] * target)
        a = _kernels.moebius_fit_cross(x, F, wt, xi, lam)
        b = _kernels.moebius_fit_cross_numpy(x, F, wt, xi, lam)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
        a = _kernels.moebius_fit_misfit(x, F, target, w, xi, lam, O, power)
        b = _kernels.moebius_fit_misfit_numpy(x, F, target, w, xi, lam, O, power)
        assert a == pytest.approx(b, rel=1e-12)
