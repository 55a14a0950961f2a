import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from confdeficit.domain import (build_chart_grid, build_icosphere, chart_to_sphere, complement_basis,
                                domain_from_dict, sphere_to_chart, tangent_frames, triangle_rule)
from confdeficit.errors import PoleSingular

unit_vectors = arrays(np.float64, 3, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: v / np.linalg.norm(v))


def test_triangle_rule_integrates_polynomials_exactly():
    # collapsed Gauss of order m is exact for total degree 2m - 2 on the reference triangle
    bary, w = triangle_rule(3)
    assert w.sum() == pytest.approx(1.0)
    s, t = bary[:, 1], bary[:, 2]
    # weights are area fractions; int s^a t^b over the unit triangle = a! b! / (a + b + 2)!
    assert 0.5 * w @ (s**2 * t**2) == pytest.approx(4 / 720, rel=1e-12)
    assert 0.5 * w @ (s**3 * t) == pytest.approx(6 / 720, rel=1e-12)


@pytest.mark.parametrize("level", [2, 3])
def test_mesh_quadrature_moments(level):
    dom = build_icosphere(level=level)
    x = dom.points
    assert dom.integrate(np.ones(len(x))) == pytest.approx(1.0, abs=1e-13)
    assert np.allclose(dom.integrate(x), 0.0, atol=1e-13)
    assert dom.integrate(x[:, 0] ** 2) == pytest.approx(1 / 3, abs=1e-6)
    # fint x1^2 x2^2 = 1/15 on S^2
    assert dom.integrate(x[:, 0] ** 2 * x[:, 1] ** 2) == pytest.approx(1 / 15, abs=1e-6)
    assert dom.total_measure == pytest.approx(4 * np.pi, rel=1e-6)


def test_frames_are_positively_oriented_tangent_bases(mesh3):
    x, P = mesh3.points, mesh3.frames
    assert np.abs(np.einsum("qij,qik->qjk", P, P) - np.eye(2)).max() < 1e-13
    assert np.abs(np.einsum("qi,qij->qj", x, P)).max() < 1e-13
    full = np.concatenate([P, x[:, :, None]], axis=2)
    assert np.all(np.linalg.det(full) > 0.999)


@given(unit_vectors)
def test_tangent_frames_single_point(x):
    P = tangent_frames(x[None])[0]
    assert np.allclose(P.T @ P, np.eye(2), atol=1e-12)
    assert np.allclose(x @ P, 0.0, atol=1e-12)
    assert np.linalg.det(np.column_stack([P, x])) == pytest.approx(1.0)


@given(unit_vectors, arrays(np.float64, (5, 2), elements=st.floats(-20, 20)))
def test_chart_round_trip(xi, y):
    basis = complement_basis(xi)
    x = chart_to_sphere(y, xi, basis)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.0)
    assert np.allclose(sphere_to_chart(x, xi, basis), y, atol=1e-8 * (1 + np.abs(y).max() ** 2))


def test_chart_jacobian_matches_differences(rng):
    xi = np.array([0.0, 0.6, 0.8])
    y = rng.normal(size=(4, 2))
    _, J = chart_to_sphere(y, xi, jacobian=True)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (chart_to_sphere(y + e, xi) - chart_to_sphere(y - e, xi)) / (2 * h)
        assert np.allclose(J[:, :, k], fd, atol=1e-8)


def test_chart_pole_raises():
    with pytest.raises(PoleSingular):
        sphere_to_chart(np.array([[0.0, 0.0, -1.0]]), np.array([0.0, 0.0, 1.0]))


def test_p1_gradient_of_coordinates_converges_at_first_order(mesh2, mesh3):
    # nodal x1 has tangential gradient close to the projection of e1
    errs = []
    for dom in (mesh2, mesh3):
        _, grad = dom.sample_nodal(dom.nodes[:, :1])
        errs.append(np.sqrt(dom.integrate(((grad[:, 0, :] - dom.frames[:, 0, :]) ** 2).sum(axis=1))))
    assert errs[1] < 0.05
    assert errs[0] / errs[1] > 1.8


def test_interpolation_matrix_at_nodes_is_identity(mesh2):
    B = mesh2.interpolation_matrix(mesh2.nodes)
    assert abs(B - np.eye(mesh2.n_nodes)).max() < 1e-10


def test_w12_matrix_is_symmetric_positive(mesh2):
    K = mesh2.w12_matrix.toarray()
    assert np.allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() > 0


@pytest.mark.parametrize("n", [3, 4])
def test_chart_grid_measure_and_gradients(n):
    dom = build_chart_grid(n, resolution=24)
    x = dom.points
    assert dom.integrate(np.ones(len(x))) == pytest.approx(1.0, abs=1e-12)
    assert dom.integrate(x[:, 0] ** 2) == pytest.approx(1 / n, abs=2e-3)
    # finite differences of the nodal coordinates approximate the frames
    vals, grad = dom.sample_nodal(dom.nodes)
    err = np.sqrt(dom.integrate(((grad - dom.frames) ** 2).sum(axis=(1, 2))))
    assert err < 0.05


def test_chart_fd_second_order():
    errs = []
    for res in (16, 32):
        dom = build_chart_grid(3, resolution=res)
        _, grad = dom.sample_nodal(dom.nodes)
        errs.append(np.sqrt(dom.integrate(((grad - dom.frames) ** 2).sum(axis=(1, 2)))))
    assert errs[0] / errs[1] > 2.5


def test_domain_round_trip(mesh2):
    again = domain_from_dict(mesh2.to_dict())
    assert np.array_equal(again.points, mesh2.points)
    chart = build_chart_grid(3, resolution=8)
    assert np.array_equal(domain_from_dict(chart.to_dict()).weights, chart.weights)
