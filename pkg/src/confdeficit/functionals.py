"""Dirichlet energy, enclosed volume, conformal deficit and degree.

For ``u : S^{n-1} -> R^n`` with tangential gradient ``grad u`` (an
``n x (n-1)`` matrix per point in an oriented orthonormal frame):

* Dirichlet energy ``D(u) = fint (|grad u|^2 / (n-1))^{(n-1)/2}``;
* wedge ``J(u)``: the cross product of the columns of ``grad u``, so that
  ``<J(u), v> = det(grad u, v)``;
* volume ``V(u) = fint <u, J(u)>``, the signed volume enclosed by ``u``
  divided by ``|B^n|``;
* deficit ``E(u) = D(u)^{n/(n-1)} / |V(u)| - 1``, which is non-negative and
  vanishes exactly on Moebius maps up to scaling and translation.

All integrals ``fint`` are normalized by the area of the sphere.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from ._kernels import winding_numbers
from .errors import DegreeAmbiguous, NotSphereValued, VolumeTooSmall

__all__ = [
    "VOLUME_FLOOR",
    "EnergyReport",
    "ResidualReport",
    "DegreeField",
    "wedge",
    "cofactor",
    "energy_density",
    "dirichlet_energy",
    "volume",
    "deficit",
    "conformality_defect",
    "degree_sphere_valued",
    "local_degree_field",
    "el_residual",
    "energy_gradient",
]

VOLUME_FLOOR = 1e-6


# ----------------------------------------------------------------------------
# pointwise algebra


def wedge(grad):
    """Wedge product of the columns of ``grad``.

    Parameters
    ----------
    grad : ndarray, shape (Q, n, n-1)

    Returns
    -------
    ndarray, shape (Q, n)
        ``J`` with ``<J, v> = det([grad, v])`` for every ``v``.
    """
    grad = np.asarray(grad, dtype=float)
    q, n, _ = grad.shape
    if n == 3:
        return np.cross(grad[:, :, 0], grad[:, :, 1])
    out = np.empty((q, n))
    rows = np.arange(n)
    for l in range(n):
        minor = grad[:, rows != l, :]
        out[:, l] = (-1.0) ** (l + n - 1) * np.linalg.det(minor)
    return out


def cofactor(mat):
    """Cofactor matrices of a batch of square matrices, shape (Q, n, n)."""
    mat = np.asarray(mat, dtype=float)
    q, n, _ = mat.shape
    out = np.empty_like(mat)
    idx = np.arange(n)
    for i, j in itertools.product(range(n), repeat=2):
        minor = mat[:, idx != i][:, :, idx != j]
        out[:, i, j] = (-1.0) ** (i + j) * np.linalg.det(minor)
    return out


def energy_density(grad):
    """Pointwise ``(|grad u|^2 / (n-1))^{(n-1)/2}``."""
    grad = np.asarray(grad, dtype=float)
    m = grad.shape[2]
    sq = np.einsum("qij,qij->q", grad, grad) / m
    return sq ** (m / 2.0)


def _sample(u):
    return u.qvalues, u.gradient


# ----------------------------------------------------------------------------
# reports


@dataclass
class EnergyReport:
    """Energy, volume and deficit of a map.

    Attributes
    ----------
    dirichlet : float
    volume : float
        Signed.
    deficit : float
        ``inf`` when ``|volume|`` is below :data:`VOLUME_FLOOR`.
    mean : list of float
        ``fint u``.
    curvature : float or None
        ``H_u = (n-1)^{(n-1)/2} D / V`` when ``V > 0``.
    volume_flag : bool
        True when the volume floor was hit.
    metadata : dict
        Domain description and tolerances.
    """

    dirichlet: float
    volume: float
    deficit: float
    mean: list
    curvature: float | None
    volume_flag: bool
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        if not np.isfinite(self.deficit):
            out["deficit"] = "inf"
        return out


@dataclass
class ResidualReport:
    """Weak Euler-Lagrange residual ``r`` tested against nodal basis functions.

    Attributes
    ----------
    norm : float
        Dual ``W^{1,2}`` norm ``sqrt(r^T K^{-1} r)`` with ``K`` the nodal
        ``W^{1,2}`` Gram matrix.
    vector : ndarray, shape (N, n)
        Residual per nodal test function and component.
    curvature : float
        ``H_u``.
    """

    norm: float
    vector: np.ndarray
    curvature: float


@dataclass
class DegreeField:
    """Local degree ``deg(u, y)`` on a set of target points.

    Attributes
    ----------
    points : ndarray, shape (P, n)
    degree : ndarray of int, shape (P,)
        Nearest integer to the winding number; ``0`` where flagged.
    winding : ndarray, shape (P,)
        Raw winding numbers.
    flagged : ndarray of bool, shape (P,)
        Points closer than ``r_min`` to the image, where the degree is not
        resolved by the discretization.
    r_min : float
    """

    points: np.ndarray
    degree: np.ndarray
    winding: np.ndarray
    flagged: np.ndarray
    r_min: float

    def to_rows(self):
        header = ["y%d" % i for i in range(self.points.shape[1])] + ["degree", "winding", "flagged"]
        rows = [list(map(float, p)) + [int(d), float(w), int(f)]
                for p, d, w, f in zip(self.points, self.degree, self.winding, self.flagged)]
        return header, rows


# ----------------------------------------------------------------------------
# functionals


def dirichlet_energy(u):
    """``D(u) = fint (|grad_T u|^2 / (n-1))^{(n-1)/2}``."""
    return float(u.domain.integrate(energy_density(u.gradient)))


def volume(u):
    """``V(u) = fint <u, J(u)>``; equals ``deg(u)`` for sphere-valued ``u``."""
    vals, grad = _sample(u)
    return float(u.domain.integrate(np.einsum("qi,qi->q", vals, wedge(grad))))


def deficit(u, volume_floor=VOLUME_FLOOR):
    """Energy, volume, deficit, mean value and ``H_u`` of a map.

    Parameters
    ----------
    u : SphereMap
    volume_floor : float
        Below this ``|V|`` the deficit is reported as ``inf``.

    Returns
    -------
    EnergyReport
    """
    n = u.domain.n
    d = dirichlet_energy(u)
    v = volume(u)
    flag = abs(v) < volume_floor
    e = np.inf if flag else d ** (n / (n - 1.0)) / abs(v) - 1.0
    h = (n - 1.0) ** ((n - 1) / 2.0) * d / v if v > volume_floor else None
    meta = dict(u.domain.metadata())
    meta.update(volume_floor=volume_floor, sampling="smooth" if u.is_smooth else "nodal")
    return EnergyReport(d, v, float(e), u.mean().tolist(), h, bool(flag), meta)


def conformality_defect(u):
    """Pointwise Hadamard gap ``(|grad u|^2/(n-1))^{(n-1)/2} - |J(u)| >= 0``.

    Vanishes exactly where ``grad_T u`` is a multiple of an isometry.
    """
    grad = u.gradient
    return energy_density(grad) - np.linalg.norm(wedge(grad), axis=1)


def _check_sphere_valued(u, tol):
    vals = u.values if not u.is_smooth else u.qvalues
    r = np.linalg.norm(vals, axis=1)
    if np.any(np.abs(r - 1.0) > tol):
        raise NotSphereValued(f"|u| leaves [1 - {tol:g}, 1 + {tol:g}] "
                              f"(range {r.min():.4g} .. {r.max():.4g})")


def degree_sphere_valued(u, tol=0.05, ambiguity=0.1):
    """Brouwer degree of an (approximately) sphere-valued map.

    Computed as ``V(u / |u|)``.

    Raises
    ------
    NotSphereValued
        If some sampled ``|u|`` is outside ``[1 - tol, 1 + tol]``.
    DegreeAmbiguous
        If ``V(u / |u|)`` is farther than ``ambiguity`` from an integer.
    """
    _check_sphere_valued(u, tol)
    v = volume(u.normalized())
    k = int(round(v))
    if abs(v - k) > ambiguity:
        raise DegreeAmbiguous(f"V(u/|u|) = {v:.4f} is not close to an integer")
    return k


def local_degree_field(u, points, safety=3.0):
    """Local degree ``deg(u, y)`` at target points ``y`` in ``R^n``.

    On a triangle mesh the image of the nodal map is a closed polyhedral
    surface and the degree is its solid-angle winding number. Otherwise the
    winding number is the Gauss integral
    ``fint <u - y, J(u)> / |u - y|^n``.

    Points within ``r_min = safety * h * L`` of the image vertices are
    flagged, where ``h`` is the largest edge (mesh) or grid step and ``L``
    the largest operator norm of ``grad_T u``.

    Returns
    -------
    DegreeField
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dom = u.domain
    lip = float(np.linalg.norm(u.gradient, ord=2, axis=(1, 2)).max())
    r_min = safety * dom.h * lip
    if dom.backend == "mesh":
        tri = u.values[dom.faces]
        wind = winding_numbers(tri, pts)
        image = u.values
    else:
        vals, grad = _sample(u)
        jac = wedge(grad)
        n = dom.n
        wind = np.empty(pts.shape[0])
        for i, y in enumerate(pts):
            rel = vals - y
            wind[i] = dom.integrate(np.einsum("qi,qi->q", rel, jac)
                                    / np.linalg.norm(rel, axis=1) ** n)
        image = vals
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(image).query(pts)
    flagged = dist < r_min
    deg = np.where(flagged, 0, np.rint(wind)).astype(int)
    return DegreeField(pts, deg, wind, flagged, r_min)


# ----------------------------------------------------------------------------
# first variation


def _w12_solver(domain):
    solver = getattr(domain, "_w12_lu", None)
    if solver is None:
        solver = splu(domain.w12_matrix)
        domain._w12_lu = solver
    return solver


def _apply_adjoint(domain, val_part, grad_part):
    """Nodal vector ``B^T (w val_part) + sum_i G_i^T (w grad_part[..., i])``."""
    w = domain.weights
    out = np.zeros((domain.n_nodes, val_part.shape[1] if val_part is not None else grad_part.shape[1]))
    if val_part is not None:
        out += domain.interp.T @ (w[:, None] * val_part)
    if grad_part is not None:
        for i, g in enumerate(domain.grads):
            out += g.T @ (w[:, None] * grad_part[:, :, i])
    return out


def el_residual(u, volume_floor=VOLUME_FLOOR):
    """Weak residual of ``div(|grad u|^{n-3} grad u) + H_u J(u) = 0``.

    For each nodal basis function ``psi`` and component,
    ``r(psi) = fint |grad u|^{n-3} grad u : grad psi - H_u fint <J(u), psi>``.
    The identity map is an exact solution.

    Raises
    ------
    VolumeTooSmall
        If ``V(u) <= volume_floor``.
    """
    dom = u.domain
    n = dom.n
    vals, grad = _sample(u)
    v = volume(u)
    if v <= volume_floor:
        raise VolumeTooSmall(f"V(u) = {v:.3g} is not above the floor {volume_floor:g}")
    h = (n - 1.0) ** ((n - 1) / 2.0) * dirichlet_energy(u) / v
    norm = np.sqrt(np.einsum("qij,qij->q", grad, grad))
    flux = norm[:, None, None] ** (n - 3) * grad
    r = _apply_adjoint(dom, -h * wedge(grad), flux)
    lu = _w12_solver(dom)
    dual = float(np.sqrt(np.einsum("ij,ij->", r, lu.solve(r))))
    return ResidualReport(dual, r, h)


def energy_gradient(u, volume_floor=VOLUME_FLOOR):
    """Deficit of a nodal map and its derivative with respect to nodal values.

    Returns
    -------
    report : EnergyReport
    grad : ndarray, shape (N, n)
        Exact derivative of the discrete deficit.
    """
    dom = u.domain
    n = dom.n
    if u.is_smooth:
        u = u.to_nodal()
    vals, grad = _sample(u)
    rep = deficit(u, volume_floor)
    if rep.volume_flag:
        raise VolumeTooSmall("volume below floor")
    d, v = rep.dirichlet, rep.volume
    sq = np.einsum("qij,qij->q", grad, grad) / (n - 1.0)
    d_grad = _apply_adjoint(dom, None, sq[:, None, None] ** ((n - 3) / 2.0) * grad)
    cof = cofactor(np.concatenate([grad, vals[:, :, None]], axis=2))
    v_grad = _apply_adjoint(dom, cof[:, :, n - 1], cof[:, :, : n - 1])
    p = n / (n - 1.0)
    g = p * d ** (p - 1.0) * d_grad / abs(v) - d**p * np.sign(v) * v_grad / v**2
    return rep, g
