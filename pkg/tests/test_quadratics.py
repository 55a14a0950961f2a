import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from confdeficit.corpus import orthogonal_fields
from confdeficit.domain import build_chart_grid
from confdeficit.functionals import cofactor, deficit
from confdeficit.maps import SphereMap, identity, random_polynomial_field
from confdeficit.quadratics import (QuadraticAssembly, coercivity_spectrum, fz_constant, fz_lower_expansion,
                                    fz_margin, interpolation_bound_check, kernel_basis, polynomial_basis,
                                    project_kernel, q_n, q_tilde, r_n, sigma_k, sigma_k_grad,
                                    volume_expansion, w12_inner, xi_n)

seeds = st.integers(0, 2**31)


@given(seeds, st.integers(2, 5))
def test_sigma_k_matches_eigenvalue_symmetric_functions(seed, n):
    A = np.random.default_rng(seed).normal(size=(n, n))
    lam = np.linalg.eigvals(A)
    for k in range(1, n + 1):
        ref = sum(np.prod(c) for c in itertools.combinations(lam, k)).real
        assert sigma_k(A, k) == pytest.approx(ref, rel=1e-8, abs=1e-8)


@given(seeds, st.integers(2, 5))
def test_sigma_k_grad_matches_differences(seed, n):
    A = np.random.default_rng(seed).normal(size=(n, n))
    h = 1e-6
    for k in range(1, n + 1):
        G = sigma_k_grad(A, k)
        fd = np.zeros((n, n))
        for i, j in itertools.product(range(n), repeat=2):
            E = np.zeros((n, n))
            E[i, j] = h
            fd[i, j] = (sigma_k(A + E, k) - sigma_k(A - E, k)) / (2 * h)
        assert np.allclose(G, fd, atol=1e-6)
    assert np.allclose(sigma_k_grad(A, n), cofactor(A[None])[0])
    assert np.allclose(sigma_k_grad(A, 2), np.trace(A) * np.eye(n) - A.T)


def test_quadratic_form_of_radial_field(mesh3):
    # w = x: |grad w|^2 = 2, div w = 2, A(w) = 2x, so Q_3 = 3/4 * 2 - 3/2 * 2
    x = SphereMap.from_smooth(mesh3, identity(3))
    assert q_n(x) == pytest.approx(-1.5, abs=1e-9)


def test_kernel_fields_are_null_and_orthonormal(mesh3):
    kb = kernel_basis(mesh3)
    assert kb.dim == 6
    G = np.array([[w12_inner(a, b) for b in kb.fields] for a in kb.fields])
    assert np.allclose(G, np.eye(kb.dim), atol=1e-9)
    for X in kb.fields:
        assert abs(q_n(X)) < 1e-9
        assert np.allclose(X.mean(), 0.0, atol=1e-9)


def test_chart_grid_identities_converge_at_second_order():
    # the cell-integrated chart weights satisfy the sphere identities up to O(h^2)
    errs = []
    for res in (16, 32):
        dom = build_chart_grid(4, res)
        kb = kernel_basis(dom)
        assert kb.dim == 10
        G = np.array([[w12_inner(a, b) for b in kb.fields] for a in kb.fields])
        assert np.allclose(G, np.eye(10), atol=1e-9)
        w = SphereMap.from_smooth(dom, random_polynomial_field(4, 2, np.random.default_rng(0), scale=0.3))
        errs.append([max(abs(q_n(X)) for X in kb.fields), abs(volume_expansion(w).residual)])
    errs = np.array(errs)
    assert np.all(errs[0] / errs[1] > 3.0)
    assert np.all(errs[1] < 1e-3)


def test_projection_is_idempotent(mesh3, rng):
    w = SphereMap.from_smooth(mesh3, random_polynomial_field(3, 3, rng))
    p = project_kernel(w)
    assert p.orthogonality < 1e-10
    again = project_kernel(p.projection)
    assert np.allclose(again.coefficients, p.coefficients, atol=1e-10)
    assert again.remainder_norm < 1e-8


@given(seeds)
def test_volume_expansion_identity(mesh3, seed):
    w = SphereMap.from_smooth(mesh3, random_polynomial_field(3, 3, np.random.default_rng(seed), scale=0.5))
    res = volume_expansion(w)
    assert abs(res.residual) < 1e-8
    assert len(res.terms) == 3


def test_volume_expansion_top_term_is_volume_of_field(chart4, rng):
    w = SphereMap.from_smooth(chart4, random_polynomial_field(4, 2, rng, scale=0.3))
    res = volume_expansion(w)
    assert len(res.terms) == 4
    from confdeficit.functionals import volume

    assert res.terms[-1] == pytest.approx(volume(w), abs=1e-10)


def test_second_variation(mesh3):
    ident = SphereMap.from_smooth(mesh3, identity(3))
    w = orthogonal_fields(mesh3, 1, seed=3)[0]
    t = 1e-3
    assert deficit(ident + t * w).deficit / t**2 == pytest.approx(q_n(w), rel=1e-2)


def test_nonlinear_form_reduces_in_three_dimensions(mesh3, rng):
    w = SphereMap.from_smooth(mesh3, random_polynomial_field(3, 3, rng))
    assert xi_n(w) == 0.0
    assert q_tilde(w) == pytest.approx(q_n(w), rel=1e-12)
    assert r_n(w) == pytest.approx(0.0, abs=1e-12)
    assert interpolation_bound_check(w) == []


def test_nonlinear_remainder_identity_in_four_dimensions(chart4, rng):
    w = SphereMap.from_smooth(chart4, random_polynomial_field(4, 2, rng, scale=0.2))
    assert r_n(w) == pytest.approx(q_tilde(w) - q_n(w), abs=1e-10)
    rows = interpolation_bound_check(w)
    assert [r["k"] for r in rows] == [3]
    assert all(np.isfinite(r["term_ratio"]) and r["rhs"] > 0 for r in rows)


@pytest.mark.parametrize("fixture", ["mesh3", "chart4"])
def test_pointwise_lower_bound(fixture, request, rng):
    dom = request.getfixturevalue(fixture)
    fields = [SphereMap.from_smooth(dom, random_polynomial_field(dom.n, 3, rng, scale=s)) for s in (0.05, 0.3, 1.0)]
    for w in fields:
        assert fz_margin(w, 0.5, 0.0).min() >= -1e-12
    c = fz_constant(fields, 0.5)
    assert c > 0
    for w in fields:
        rep = fz_lower_expansion(w, 0.5, c)
        assert rep.min_margin >= -1e-10


def test_assembly_agrees_with_direct_quadrature(mesh2, rng):
    basis = polynomial_basis(mesh2, 3)
    asm = QuadraticAssembly(basis)
    c = rng.normal(size=asm.form.shape[0])
    assert asm.quadratic(c) == pytest.approx(q_n(asm.field(c)), rel=1e-10, abs=1e-12)


def test_spectrum_on_coarse_mesh(mesh2):
    rep = coercivity_spectrum(mesh2, m=6)
    assert rep.kernel_dimension == 6
    assert rep.eigenvalues[0] == pytest.approx(0.25, rel=1e-3)
    assert np.all(np.diff(rep.eigenvalues) >= -1e-12)


def test_nodal_basis_spectrum_is_positive(mesh2):
    rep = coercivity_spectrum(mesh2, m=3, basis="nodal")
    assert rep.eigenvalues[0] > 0
