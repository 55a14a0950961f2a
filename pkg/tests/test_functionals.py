import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from confdeficit.errors import DegreeAmbiguous, NotSphereValued, VolumeTooSmall
from confdeficit.functionals import (cofactor, conformality_defect, deficit, degree_sphere_valued,
                                     dirichlet_energy, el_residual, energy_gradient, local_degree_field, volume,
                                     wedge)
from confdeficit.maps import SphereMap, constant, identity, linear_map, power_map, random_polynomial_field
from confdeficit.moebius import sample_random

seeds = st.integers(0, 2**31)


def test_identity_values(mesh3):
    rep = deficit(SphereMap.from_smooth(mesh3, identity(3)))
    assert rep.dirichlet == pytest.approx(1.0, abs=1e-10)
    assert rep.volume == pytest.approx(1.0, abs=1e-10)
    assert abs(rep.deficit) < 1e-9
    assert rep.curvature == pytest.approx(2.0, abs=1e-9)


def test_identity_on_chart_grid(chart4):
    rep = deficit(SphereMap.from_smooth(chart4, identity(4)))
    assert abs(rep.deficit) < 1e-3
    assert rep.volume == pytest.approx(1.0, abs=1e-3)


def test_wedge_and_cofactor_oracles(rng):
    A = rng.normal(size=(5, 3, 3))
    assert np.allclose(np.einsum("pij,pij->p", cofactor(A), A) / 3, np.linalg.det(A))
    G = rng.normal(size=(5, 3, 2))
    assert np.allclose(wedge(G), np.cross(G[:, :, 0], G[:, :, 1]))


@given(seeds)
def test_moebius_maps_have_zero_deficit(mesh3, seed):
    phi = sample_random(3, np.random.default_rng(seed), orientation="any")
    rep = deficit(SphereMap.from_smooth(mesh3, phi.as_smooth()))
    assert abs(rep.deficit) < 1e-8
    assert rep.volume == pytest.approx(phi.orientation, abs=1e-8)
    assert np.abs(conformality_defect(SphereMap.from_smooth(mesh3, phi.as_smooth()))).max() < 1e-8


@given(seeds, st.floats(0.05, 2.0), st.floats(0.1, 10.0))
def test_deficit_nonnegative_and_scale_translation_invariant(mesh2, seed, amp, scale):
    rng = np.random.default_rng(seed)
    u = SphereMap.from_smooth(mesh2, identity(3) + amp * random_polynomial_field(3, 3, rng))
    rep = deficit(u)
    if rep.volume_flag:
        return
    assert rep.deficit >= -1e-10
    assert deficit(scale * u).deficit == pytest.approx(rep.deficit, rel=1e-9, abs=1e-12)
    # translations change V only through the quadrature error of fint J
    moved = deficit(u + rng.normal(size=3))
    assert moved.deficit == pytest.approx(rep.deficit, rel=1e-5, abs=1e-8)


@given(seeds)
def test_energy_is_conformally_invariant_for_smooth_maps(mesh3, seed):
    rng = np.random.default_rng(seed)
    u = SphereMap.from_smooth(mesh3, identity(3) + 0.3 * random_polynomial_field(3, 2, rng))
    phi = sample_random(3, rng)
    assert dirichlet_energy(u.precompose(phi)) == pytest.approx(dirichlet_energy(u), rel=1e-3)
    assert volume(u.precompose(phi)) == pytest.approx(volume(u), rel=1e-3)


def test_volume_floor_flags_degenerate_maps(mesh2):
    rep = deficit(SphereMap.from_smooth(mesh2, constant(np.ones(3))))
    assert rep.volume_flag and rep.deficit == np.inf and rep.curvature is None
    assert rep.to_dict()["deficit"] == "inf"


@pytest.mark.parametrize("k", [-2, -1, 1, 2, 3])
def test_degree_of_power_maps(mesh3, k):
    u = SphereMap.from_smooth(mesh3, power_map(k))
    assert volume(u) == pytest.approx(k, abs=1e-6)
    assert degree_sphere_valued(u) == k


def test_degree_preconditions(mesh2):
    with pytest.raises(NotSphereValued):
        degree_sphere_valued(SphereMap.from_smooth(mesh2, 2.0 * identity(3)))
    # coarse nodal z^-2 is too far from an integer volume
    with pytest.raises(DegreeAmbiguous):
        degree_sphere_valued(SphereMap.from_smooth(mesh2, power_map(-2)).to_nodal(), ambiguity=1e-4)


def test_local_degree_of_identity_and_double_cover(mesh3, rng):
    pts = rng.uniform(-1.4, 1.4, size=(1500, 3))
    for k in (1, 2):
        u = SphereMap.from_smooth(mesh3, power_map(k)).to_nodal()
        field_ = local_degree_field(u, pts)
        ok = ~field_.flagged
        r = np.linalg.norm(pts, axis=1)
        assert ok.sum() > 20
        assert np.all(field_.degree[ok] == np.where(r[ok] < 1, k, 0))


def test_local_degree_on_chart_grid(rng):
    from confdeficit.domain import build_chart_grid

    dom = build_chart_grid(3, resolution=24)
    pts = np.array([[0.0, 0.0, 0.0], [0.2, 0.1, -0.3], [3.0, 0.0, 0.0]])
    field_ = local_degree_field(SphereMap.from_smooth(dom, identity(3)), pts)
    assert list(field_.degree) == [1, 1, 0]


def test_energy_gradient_matches_differences(mesh2, rng):
    u = SphereMap(mesh2, mesh2.nodes + 0.1 * rng.normal(size=mesh2.nodes.shape))
    rep, g = energy_gradient(u)
    d = rng.normal(size=g.shape)
    h = 1e-6
    fd = (deficit(SphereMap(mesh2, u.values + h * d)).deficit
          - deficit(SphereMap(mesh2, u.values - h * d)).deficit) / (2 * h)
    assert np.sum(g * d) == pytest.approx(fd, rel=1e-6)


def test_energy_gradient_requires_volume(mesh2):
    with pytest.raises(VolumeTooSmall):
        energy_gradient(SphereMap(mesh2, np.zeros((mesh2.n_nodes, 3))))


def test_el_residual_vanishes_for_identity(mesh3, rng):
    smooth = el_residual(SphereMap.from_smooth(mesh3, identity(3)))
    assert smooth.norm < 1e-6
    assert smooth.curvature == pytest.approx(2.0)
    bumped = el_residual(SphereMap.from_smooth(mesh3, identity(3) + 0.1 * random_polynomial_field(3, 3, rng)))
    assert bumped.norm > 100 * smooth.norm


def test_el_residual_of_moebius_map(mesh3):
    phi = sample_random(3, np.random.default_rng(4))
    assert el_residual(SphereMap.from_smooth(mesh3, phi.as_smooth())).norm < 1e-6


def test_el_residual_equivariance_and_translation(mesh2, rng):
    w = random_polynomial_field(3, 3, np.random.default_rng(9), scale=0.1, mean_free=True)
    u = SphereMap.from_smooth(mesh2, identity(3) + w)
    base = el_residual(u)
    R = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    if np.linalg.det(R) < 0:
        R = -R
    rotated = el_residual(SphereMap.from_smooth(mesh2, linear_map(R).compose(identity(3) + w)))
    assert np.allclose(rotated.vector, base.vector @ R.T, atol=1e-12)
    # J(u) and grad u ignore translations; only H_u moves, through the quadrature error of V
    shifted = el_residual(u + np.array([0.3, 0.0, 0.0]))
    assert np.allclose(shifted.vector, base.vector, atol=1e-6)
    assert shifted.norm == pytest.approx(base.norm, rel=1e-5)
