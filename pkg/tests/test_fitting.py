import numpy as np
import pytest

from confdeficit.corpus import orthogonal_fields
from confdeficit.errors import DegenerateEnergy, OutsideBasin, StepCollapse, VolumeTooSmall
from confdeficit.fitting import (bubble_normalize, chart_affine_moebius, covering, deficit_flow, fit_moebius,
                                 lambda_scale, normalize_projection, rotation_distance)
from confdeficit.maps import SphereMap, constant, identity, random_polynomial_field
from confdeficit.moebius import MoebiusTransform, inverse, sample_random


@pytest.fixture(scope="module")
def perturbed(mesh3):
    w = orthogonal_fields(mesh3, 1, seed=7)[0]
    return SphereMap.from_smooth(mesh3, identity(3)) + 0.05 * w


@pytest.mark.parametrize("orientation", ["preserving", "reversing"])
def test_fit_recovers_moebius_maps(mesh3, orientation):
    phi = sample_random(3, np.random.default_rng(3), orientation=orientation)
    u = SphereMap.from_smooth(mesh3, 2.5 * phi.as_smooth() + np.array([1.0, -2.0, 0.5]))
    res = fit_moebius(u, n_starts=3)
    assert res.distance < 1e-10
    assert res.scale == pytest.approx(2.5)
    assert res.transform.action_distance(phi, mesh3.points) < 1e-5
    assert res.transform.orientation == phi.orientation
    assert np.isnan(res.ratio)


def test_fit_is_scale_and_translation_invariant(perturbed):
    a = fit_moebius(perturbed, n_starts=2)
    b = fit_moebius(3.0 * perturbed + np.array([0.0, 1.0, 2.0]), n_starts=2)
    assert b.distance == pytest.approx(a.distance, rel=1e-6)
    assert a.converged
    assert 0.1 < a.ratio < 10.0


def test_fit_is_invariant_under_moebius_precomposition(perturbed):
    psi = MoebiusTransform.from_boost(np.array([0.1, 0.2, -0.1]))
    a = fit_moebius(perturbed, n_starts=2)
    b = fit_moebius(perturbed.precompose(psi), n_starts=2)
    assert b.distance == pytest.approx(a.distance, rel=0.02)


def test_fit_in_four_dimensions(chart4):
    phi = sample_random(4, np.random.default_rng(5), lam_range=(0.7, 1.4))
    u = SphereMap.from_smooth(chart4, phi.as_smooth())
    res = fit_moebius(u, n_starts=2)
    assert res.distance < 1e-8
    assert res.transform.action_distance(phi, chart4.points) < 1e-3


def test_fit_rejects_degenerate_volume(mesh2):
    with pytest.raises(VolumeTooSmall):
        fit_moebius(SphereMap.from_smooth(mesh2, constant(np.ones(3))))


def test_normalization_inverts_a_moebius_map(mesh3):
    phi = MoebiusTransform.from_boost(np.log(1.1) * np.array([0.0, 0.6, 0.8]))
    res = normalize_projection(SphereMap.from_smooth(mesh3, phi.as_smooth()))
    assert res.psi.action_distance(inverse(phi), mesh3.points) < 1e-8
    assert res.lam == pytest.approx(1.0, abs=1e-8)
    assert res.projection_residual < 1e-8


def test_normalization_of_perturbed_map(mesh3, perturbed):
    phi = MoebiusTransform.from_boost(np.array([0.05, -0.05, 0.1]))
    u = 2.0 * perturbed.precompose(phi)
    res = normalize_projection(u)
    w = res.w
    assert res.projection_residual < 1e-8
    assert np.allclose(w.mean(), 0.0, atol=1e-10)
    assert abs(mesh3.integrate(np.einsum("qi,qi->q", w.qvalues, mesh3.points))) < 1e-10
    # psi undoes phi up to the size of the perturbation
    assert res.psi.action_distance(inverse(phi), mesh3.points) < 0.05
    # the direct fit and the projection agree to the same order
    fit = fit_moebius(u, n_starts=2)
    assert inverse(res.psi).action_distance(fit.transform, mesh3.points) < 0.05


def test_normalization_failure_modes(mesh2):
    with pytest.raises(VolumeTooSmall):
        normalize_projection(SphereMap.from_smooth(mesh2, -1.0 * identity(3)))
    u = SphereMap.from_smooth(mesh2, identity(3) + random_polynomial_field(3, 3, np.random.default_rng(0)))
    with pytest.raises(OutsideBasin):
        normalize_projection(u, max_iter=1, tol=1e-14)


def test_lambda_scale_of_identity(mesh3):
    u = SphereMap.from_smooth(mesh3, identity(3))
    assert lambda_scale(u, MoebiusTransform.identity(3)) == pytest.approx(1.0, abs=1e-10)
    assert lambda_scale(2.0 * u, MoebiusTransform.identity(3)) == pytest.approx(2.0, abs=1e-10)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_covering_covers_the_chart_ball(n):
    centers, rho0, r0 = covering(n)
    assert r0 == pytest.approx(0.6)
    if n == 3:
        assert len(centers) == 7
    pts = np.random.default_rng(0).normal(size=(4000, n - 1))
    pts *= rho0 * np.random.default_rng(1).random(4000)[:, None] ** (1 / (n - 1)) / np.linalg.norm(
        pts, axis=1, keepdims=True)
    d = np.linalg.norm(pts[:, None, :] - centers[None], axis=2).min(axis=1)
    assert d.max() <= 1.0 + 1e-12


def test_chart_affine_moebius_dilation():
    phi = chart_affine_moebius(0.5, np.zeros(2), 3)
    ref = MoebiusTransform(np.eye(3), np.array([0.0, 0.0, 1.0]), 0.5)
    x = np.random.default_rng(0).normal(size=(50, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    assert phi.action_distance(ref, x) < 1e-8


def test_bubble_normalization_of_identity(mesh3):
    res = bubble_normalize(SphereMap.from_smooth(mesh3, identity(3)), fraction=0.5)
    assert res.radius == pytest.approx(1.0, abs=0.05)
    assert rotation_distance(res.normalized)[0] < 0.1
    assert res.window_ok


def test_bubble_normalization_of_concentrated_map(mesh3):
    phi = MoebiusTransform(np.eye(3), np.array([0.6, 0.0, 0.8]), 10.0)
    res = bubble_normalize(SphereMap.from_smooth(mesh3, phi.as_smooth()), fraction=0.5)
    assert res.radius < 0.5
    assert rotation_distance(res.normalized)[0] < 0.1
    assert res.window_ok


def test_bubble_default_fraction_sits_on_the_window_edge(mesh3):
    res = bubble_normalize(SphereMap.from_smooth(mesh3, identity(3)))
    assert res.fraction == pytest.approx(1 / 8)
    # the upper hemisphere is the unit chart ball and carries the selected share
    assert res.cap_fractions[-1] == pytest.approx(1 / 8, abs=5e-3)


def test_bubble_preconditions(mesh2):
    with pytest.raises(VolumeTooSmall):
        bubble_normalize(SphereMap.from_smooth(mesh2, constant(np.ones(3))))
    with pytest.raises(DegenerateEnergy):
        bubble_normalize(SphereMap.from_smooth(mesh2, identity(3)), energy_floor=10.0)
    with pytest.raises(ValueError):
        bubble_normalize(SphereMap.from_smooth(mesh2, identity(3)), fraction=0.7)


def test_rotation_distance_oracle(mesh2):
    R = np.linalg.qr(np.random.default_rng(0).normal(size=(3, 3)))[0]
    if np.linalg.det(R) < 0:
        R = -R
    d, Rf = rotation_distance(SphereMap.from_smooth(mesh2, identity(3)).linear(R))
    assert d < 1e-12 and np.allclose(Rf, R)


def test_flow_is_monotone_and_reduces_deficit(mesh2):
    u = SphereMap.from_smooth(mesh2, identity(3) + random_polynomial_field(3, 3, np.random.default_rng(1),
                                                                           scale=0.2, mean_free=True))
    seen = []
    flow = deficit_flow(u, steps=40, callback=lambda i, v, rep: seen.append(i))
    d = np.array(flow.deficits)
    assert np.all(np.diff(d) <= 0)
    assert d[-1] < 0.5 * d[0]
    assert seen == list(range(len(d)))
    assert flow.residual_norm is not None


def test_flow_step_collapse(mesh2):
    u = SphereMap.from_smooth(mesh2, identity(3) + 0.2 * random_polynomial_field(3, 3, np.random.default_rng(1)))
    with pytest.raises(StepCollapse):
        deficit_flow(u, steps=5, step=1e4, min_step=1e3)
