import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from confdeficit.errors import FitFailed, PoleSingular
from confdeficit.maps import SmoothMap
from confdeficit.moebius import (MoebiusAlgebraField, MoebiusTransform, algebra_basis, compose, inverse,
                                 inverse_stereographic, moebius_from_map, sample_random, stereographic)


def _points(n, count=200, seed=0):
    x = np.random.default_rng(seed).normal(size=(count, n))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _same(phi, psi, n):
    return phi.action_distance(psi, _points(n)) < 1e-9


seeds = st.integers(0, 2**31)
dims = st.sampled_from([3, 4, 5])


def test_dilation_fixes_poles_and_stretches():
    xi = np.array([0.0, 0.6, 0.8])
    phi = MoebiusTransform(np.eye(3), xi, 3.0)
    assert np.allclose(phi(xi[None]), xi)
    assert np.allclose(phi(-xi[None]), -xi)
    assert phi.conformal_factor(xi[None])[0] == pytest.approx(3.0)
    assert phi.conformal_factor(-xi[None])[0] == pytest.approx(1 / 3.0)


def test_points_move_away_from_xi_for_large_lambda():
    xi = np.array([0.0, 0.0, 1.0])
    x = np.array([[np.sin(0.3), 0.0, np.cos(0.3)]])
    y = MoebiusTransform(np.eye(3), xi, 2.0)(x)
    assert y[0] @ xi < x[0] @ xi


def test_stereographic_round_trip():
    xi = np.array([0.0, 0.0, 1.0])
    x = _points(3)
    x = x[x @ xi > -0.99]
    assert np.allclose(inverse_stereographic(xi, stereographic(xi, x)), x)
    with pytest.raises(PoleSingular):
        stereographic(xi, -xi[None])


@given(seeds, dims)
def test_image_on_sphere_and_conformal(seed, n):
    rng = np.random.default_rng(seed)
    phi = sample_random(n, rng, orientation="any")
    x = _points(n, 50, seed)
    y = phi(x)
    assert np.allclose(np.linalg.norm(y, axis=1), 1.0)
    # D phi restricted to the tangent space is c times an isometry
    J = phi.jacobian(x)
    P = np.eye(n) - x[:, :, None] * x[:, None, :]
    G = np.einsum("pij,pik->pjk", J @ P, J @ P)
    c = phi.conformal_factor(x)
    assert np.allclose(G, c[:, None, None] ** 2 * P, atol=1e-9)


@given(seeds, dims)
def test_group_law(seed, n):
    rng = np.random.default_rng(seed)
    a, b, c = (sample_random(n, rng, orientation="any") for _ in range(3))
    x = _points(n, 50, seed)
    assert np.allclose(compose(a, b)(x), a(b(x)), atol=1e-9)
    assert _same(compose(compose(a, b), c), compose(a, compose(b, c)), n)
    assert _same(compose(a, inverse(a)), MoebiusTransform.identity(n), n)


@given(seeds, dims)
def test_canonical_form_is_unique(seed, n):
    phi = sample_random(n, np.random.default_rng(seed), orientation="any")
    can = phi.canonical()
    assert can.lam >= 1.0
    assert _same(phi, can, n)
    again = MoebiusTransform.from_dict(can.to_dict())
    assert np.allclose(again.O, can.O) and np.allclose(again.xi, can.xi) and again.lam == can.lam


@given(seeds, dims)
def test_recovery_from_action(seed, n):
    phi = sample_random(n, np.random.default_rng(seed), orientation="any").canonical()
    rec = moebius_from_map(phi.as_smooth(), n)
    assert _same(phi, rec, n)
    assert rec.orientation == phi.orientation


def test_recovery_rejects_non_conformal_maps():
    f = SmoothMap(lambda x: x * np.array([1.0, 1.0, 2.0]) / np.linalg.norm(x * np.array([1.0, 1.0, 2.0]), axis=1,
                                                                         keepdims=True))
    with pytest.raises(FitFailed):
        moebius_from_map(f, 3)


@pytest.mark.parametrize("n", [3, 4])
def test_dilation_generator_matches_derivative(n):
    xi = np.eye(n)[0]
    x = _points(n, 30)
    t = 1e-6
    fd = (MoebiusTransform(np.eye(n), xi, np.exp(t))(x) - MoebiusTransform(np.eye(n), xi, np.exp(-t))(x)) / (2 * t)
    X = MoebiusAlgebraField(np.zeros((n, n)), xi, 1.0)
    assert np.allclose(X(x), fd, atol=1e-8)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_algebra_basis_size_and_tangency(n):
    basis = algebra_basis(n)
    assert len(basis) == n * (n + 1) // 2
    x = _points(n, 20)
    for X in basis:
        assert np.allclose(np.einsum("pi,pi->p", X(x), x), 0.0, atol=1e-12)
