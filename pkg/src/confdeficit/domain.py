"""Discretizations of the unit sphere S^{n-1} in R^n.

A :class:`Domain` bundles a normalized quadrature rule (points ``x_q`` on the
sphere with weights summing to one, so that sums are averages), a positively
oriented orthonormal tangent frame at every quadrature point, and nodal
operators that turn nodal values into values and frame derivatives at the
quadrature points.

Two backends are provided:

* :class:`TriangleMesh` (``n = 3``): an icosahedral triangulation with a
  per-face collapsed Gauss rule and piecewise-linear nodal maps lifted to the
  sphere by radial projection.
* :class:`ChartGrid` (``n = 3, 4, 5``): two stereographic charts centred at
  the poles ``+e_n`` and ``-e_n``, each sampled on a Cartesian grid of the unit
  ball with finite-difference derivatives.
"""

from __future__ import annotations

import itertools
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import PoleSingular

__all__ = [
    "Domain",
    "TriangleMesh",
    "ChartGrid",
    "build_icosphere",
    "build_chart_grid",
    "tangent_frames",
    "complement_basis",
    "chart_to_sphere",
    "sphere_to_chart",
    "fint",
    "domain_from_dict",
]


# ----------------------------------------------------------------------------
# frames and stereographic charts


def tangent_frames(x):
    """Orthonormal tangent frames at points of the sphere.

    Parameters
    ----------
    x : ndarray, shape (Q, n)
        Unit vectors.

    Returns
    -------
    ndarray, shape (Q, n, n-1)
        Columns ``tau_1..tau_{n-1}`` spanning ``x^perp`` with
        ``det(tau_1, ..., tau_{n-1}, x) > 0``.

    Notes
    -----
    The frame is the image of ``e_1..e_{n-1}`` under the Householder
    reflection sending ``e_n`` to ``+x`` (``x_n >= 0``) or ``-x``
    (``x_n < 0``), with ``tau_1`` flipped where needed for orientation.
    """
    x = np.asarray(x, dtype=float)
    q, n = x.shape
    en = np.zeros(n)
    en[-1] = 1.0
    sgn = np.where(x[:, -1] >= 0.0, 1.0, -1.0)
    v = sgn[:, None] * x - en
    # |x_n| - 1 without cancellation near the poles
    tail = np.einsum("qi,qi->q", x[:, :-1], x[:, :-1])
    v[:, -1] = -tail / (1.0 + np.abs(x[:, -1]))
    vv = np.einsum("qi,qi->q", v, v)
    safe = vv > 0.0
    coef = np.where(safe, 2.0 / np.where(safe, vv, 1.0), 0.0)
    # H e_j = e_j - coef * v_j * v for j < n
    frames = np.broadcast_to(np.eye(n)[:, : n - 1], (q, n, n - 1)).copy()
    frames -= coef[:, None, None] * v[:, :, None] * v[:, None, : n - 1]
    full = np.concatenate([frames, x[:, :, None]], axis=2)
    det = np.linalg.det(full)
    frames[:, :, 0] *= np.where(det < 0.0, -1.0, 1.0)[:, None]
    return frames


def complement_basis(xi):
    """Orthonormal basis of ``xi^perp`` as the columns of an (n, n-1) array.

    For ``xi = +-e_n`` this is ``e_1..e_{n-1}``, which fixes the chart
    coordinates of the two polar charts.
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    if abs(abs(xi[-1]) - 1.0) < 1e-15:
        return np.eye(n)[:, : n - 1].copy()
    return tangent_frames(xi[None, :])[0]


def chart_to_sphere(y, xi, basis=None, jacobian=False):
    """Inverse stereographic projection from the pole ``-xi``.

    Maps ``y`` in ``R^{n-1}`` (coordinates in ``basis``) to
    ``((1 - |y|^2) xi + 2 y) / (1 + |y|^2)``; ``y = 0`` goes to ``xi``.

    Parameters
    ----------
    y : ndarray, shape (P, n-1)
    xi : ndarray, shape (n,)
    basis : ndarray, shape (n, n-1), optional
        Defaults to :func:`complement_basis` of ``xi``.
    jacobian : bool
        Also return the derivative, shape (P, n, n-1).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    xi = np.asarray(xi, dtype=float)
    if basis is None:
        basis = complement_basis(xi)
    r2 = np.einsum("pi,pi->p", y, y)
    yy = y @ basis.T
    den = 1.0 + r2
    x = ((1.0 - r2)[:, None] * xi + 2.0 * yy) / den[:, None]
    if not jacobian:
        return x
    # d/dy_i of numerator and denominator
    dnum = -2.0 * y[:, None, :] * xi[None, :, None] + 2.0 * basis[None, :, :]
    num = (1.0 - r2)[:, None] * xi + 2.0 * yy
    dx = dnum / den[:, None, None] - num[:, :, None] * (2.0 * y)[:, None, :] / (den**2)[:, None, None]
    return x, dx


def sphere_to_chart(x, xi, basis=None, tol=1e-12):
    """Stereographic projection from the pole ``-xi``.

    Returns ``y = B^T (x - <x, xi> xi) / (1 + <x, xi>)``.

    Raises
    ------
    PoleSingular
        If some point lies within ``tol`` of ``-xi``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.asarray(xi, dtype=float)
    if basis is None:
        basis = complement_basis(xi)
    a = x @ xi
    if np.any(1.0 + a < tol):
        raise PoleSingular("point at the projection pole")
    return (x @ basis) / (1.0 + a)[:, None]


# ----------------------------------------------------------------------------
# base class


class Domain:
    """Quadrature rule, tangent frames and nodal operators on ``S^{n-1}``.

    Attributes
    ----------
    n : int
        Ambient dimension; the sphere is ``S^{n-1}``.
    points : ndarray, shape (Q, n)
        Quadrature points on the unit sphere.
    weights : ndarray, shape (Q,)
        Normalized weights, summing to one.
    frames : ndarray, shape (Q, n, n-1)
        Positively oriented orthonormal tangent frames.
    nodes : ndarray, shape (N, n)
        Positions of the nodal degrees of freedom.
    interp : scipy.sparse.csr_matrix, shape (Q, N)
        Nodal values to values at quadrature points.
    grads : list of scipy.sparse.csr_matrix, shape (Q, N)
        Nodal values to frame derivatives ``d/dtau_i`` at quadrature points.
    h : float
        Characteristic mesh size.
    """

    backend = "abstract"

    def __init__(self, n, points, weights, frames, nodes, interp, grads, h):
        self.n = int(n)
        self.points = np.ascontiguousarray(points, dtype=float)
        w = np.asarray(weights, dtype=float)
        self.total_measure = float(w.sum())
        self.weights = w / self.total_measure
        self.frames = np.ascontiguousarray(frames, dtype=float)
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.interp = sp.csr_matrix(interp)
        self.grads = [sp.csr_matrix(g) for g in grads]
        self.h = float(h)
        for arr in (self.points, self.weights, self.frames, self.nodes):
            arr.setflags(write=False)

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    def integrate(self, field):
        """Normalized integral ``fint f`` of a field sampled at quadrature points."""
        f = np.asarray(field, dtype=float)
        return np.tensordot(self.weights, f, axes=(0, 0))

    @cached_property
    def mass_matrix(self):
        """Scalar nodal mass matrix ``B^T W B``."""
        bw = self.interp.multiply(self.weights[:, None]).tocsr()
        return (self.interp.T @ bw).tocsr()

    @cached_property
    def stiffness_matrix(self):
        """Scalar nodal stiffness matrix ``sum_i G_i^T W G_i``."""
        out = None
        for g in self.grads:
            term = g.T @ g.multiply(self.weights[:, None]).tocsr()
            out = term if out is None else out + term
        return out.tocsr()

    @cached_property
    def w12_matrix(self):
        """Scalar nodal ``W^{1,2}`` Gram matrix (mass plus stiffness)."""
        return (self.mass_matrix + self.stiffness_matrix).tocsc()

    def sample_nodal(self, values):
        """Values and tangential gradient at quadrature points of nodal data.

        Parameters
        ----------
        values : ndarray, shape (N, m)

        Returns
        -------
        vals : ndarray, shape (Q, m)
        grad : ndarray, shape (Q, m, n-1)
        """
        values = np.asarray(values, dtype=float)
        vals = self.interp @ values
        grad = np.stack([g @ values for g in self.grads], axis=-1)
        return vals, grad

    def interpolation_matrix(self, points):
        """Sparse matrix evaluating nodal data at arbitrary sphere points."""
        raise NotImplementedError

    def metadata(self):
        return {"backend": self.backend, "n": self.n, "h": self.h,
                "n_points": self.n_points, "n_nodes": self.n_nodes}

    def to_dict(self):
        raise NotImplementedError


def fint(domain, field):
    """Normalized surface integral of a field given at the quadrature points."""
    return domain.integrate(field)


# ----------------------------------------------------------------------------
# triangle meshes


def _gauss01(m):
    t, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (t + 1.0), 0.5 * w


def triangle_rule(order):
    """Quadrature rule on the reference triangle.

    Parameters
    ----------
    order : int or "midpoint"
        Number of Gauss points per direction of the collapsed square, or
        the one-point centroid rule.

    Returns
    -------
    bary : ndarray, shape (P, 3)
        Barycentric coordinates of the rule points.
    weights : ndarray, shape (P,)
        Weights as fractions of the triangle area (they sum to one).
    """
    if order == "midpoint":
        return np.full((1, 3), 1.0 / 3.0), np.ones(1)
    m = int(order)
    s, ws = _gauss01(m)
    bary, wts = [], []
    for si, wi in zip(s, ws):
        for tj, wj in zip(s, ws):
            l1 = si
            l2 = tj * (1.0 - si)
            bary.append((1.0 - l1 - l2, l1, l2))
            wts.append(2.0 * wi * wj * (1.0 - si))
    return np.array(bary), np.array(wts)


def _icosahedron():
    p = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(verts, faces):
    verts = list(verts)
    cache = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            m = verts[a] + verts[b]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return np.array(verts), np.array(out)


class TriangleMesh(Domain):
    """Triangulated ``S^2`` with radially lifted piecewise-linear nodal maps.

    Parameters
    ----------
    vertices : ndarray, shape (V, 3)
        Vertices on the unit sphere.
    faces : ndarray, shape (F, 3)
        Vertex indices; reoriented so that normals point outward.
    order : int or "midpoint"
        Per-face rule passed to :func:`triangle_rule`. The rule points are
        projected radially to the sphere and weighted by the solid-angle
        density, so smooth integrands are integrated over the exact sphere.
    level : int, optional
        Subdivision level, recorded as metadata.
    """

    backend = "mesh"

    def __init__(self, vertices, faces, order=3, level=None):
        verts = np.asarray(vertices, dtype=float)
        verts = verts / np.linalg.norm(verts, axis=1, keepdims=True)
        faces = np.array(faces, dtype=np.int64)
        a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
        cross = np.cross(b - a, c - a)
        flip = np.einsum("fi,fi->f", cross, a + b + c) < 0
        faces[flip] = faces[flip][:, [0, 2, 1]]
        a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
        cross = np.cross(b - a, c - a)
        area = 0.5 * np.linalg.norm(cross, axis=1)
        normal = cross / (2.0 * area)[:, None]

        self.vertices = verts
        self.faces = faces
        self.order = order
        self.level = level
        self.face_normals = normal
        self.face_areas = area

        bary, rw = triangle_rule(order)
        nf, npf = faces.shape[0], bary.shape[0]
        corners = verts[faces]                                   # (F,3,3)
        flat = np.einsum("pk,fkd->fpd", bary, corners)           # (F,P,3)
        r = np.linalg.norm(flat, axis=2)
        x = flat / r[:, :, None]
        dist = np.einsum("fd,fd->f", normal, a)                  # plane offset
        w = area[:, None] * rw[None, :] * dist[:, None] / r**3

        x = x.reshape(-1, 3)
        w = w.reshape(-1)
        r = r.reshape(-1)
        face_of = np.repeat(np.arange(nf), npf)
        frames = tangent_frames(x)

        # gradients of barycentric coordinates in each face plane
        e1, e2 = b - a, c - a
        emat = np.stack([e1, e2], axis=2)                        # (F,3,2)
        gram_inv = np.linalg.inv(np.einsum("fdi,fdj->fij", emat, emat))
        g12 = np.einsum("fdi,fij->fdj", emat, gram_inv)          # (F,3,2)
        gl = np.stack([-g12[:, :, 0] - g12[:, :, 1], g12[:, :, 0], g12[:, :, 1]], axis=2)

        # derivative of the radial lift x -> plane point, applied to frames
        nq = normal[face_of]
        xn = np.einsum("qd,qd->q", x, nq)
        tn = np.einsum("qdi,qd->qi", frames, nq)
        lifted = r[:, None, None] * (frames - x[:, :, None] * (tn / xn[:, None])[:, None, :])

        rows = np.repeat(np.arange(x.shape[0]), 3)
        cols = faces[face_of].reshape(-1)
        interp = sp.csr_matrix((np.tile(bary, (nf, 1)).reshape(-1), (rows, cols)),
                               shape=(x.shape[0], verts.shape[0]))
        grads = []
        for i in range(2):
            vals = np.einsum("qdk,qd->qk", gl[face_of], lifted[:, :, i]).reshape(-1)
            grads.append(sp.csr_matrix((vals, (rows, cols)), shape=interp.shape))

        edges = np.concatenate([b - a, c - b, a - c])
        h = float(np.linalg.norm(edges, axis=1).max())
        self.face_of_point = face_of
        super().__init__(3, x, w, frames, verts, interp, grads, h)

    @cached_property
    def _centroid_tree(self):
        cen = self.vertices[self.faces].mean(axis=1)
        return cKDTree(cen / np.linalg.norm(cen, axis=1, keepdims=True))

    def locate(self, points, k=10):
        """Face containing the ray through each point and flat barycentrics.

        Returns
        -------
        face : ndarray of int, shape (P,)
        bary : ndarray, shape (P, 3)
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(k, self.faces.shape[0])
        _, cand = self._centroid_tree.query(pts, k=k)
        cand = np.atleast_2d(cand)
        best_face = cand[:, 0].copy()
        best_bary = np.full((pts.shape[0], 3), np.nan)
        best_score = np.full(pts.shape[0], -np.inf)
        for j in range(k):
            f = cand[:, j]
            bary = self._ray_bary(pts, f)
            score = bary.min(axis=1)
            better = score > best_score
            best_face[better] = f[better]
            best_bary[better] = bary[better]
            best_score[better] = score[better]
        return best_face, best_bary

    def _ray_bary(self, pts, f):
        nrm = self.face_normals[f]
        v = self.vertices[self.faces[f]]                          # (P,3,3)
        d = np.einsum("pd,pd->p", nrm, v[:, 0])
        p = pts * (d / np.einsum("pd,pd->p", pts, nrm))[:, None]
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        rhs = p - v[:, 0]
        g11 = np.einsum("pd,pd->p", e1, e1)
        g12 = np.einsum("pd,pd->p", e1, e2)
        g22 = np.einsum("pd,pd->p", e2, e2)
        b1 = np.einsum("pd,pd->p", e1, rhs)
        b2 = np.einsum("pd,pd->p", e2, rhs)
        det = g11 * g22 - g12**2
        l1 = (g22 * b1 - g12 * b2) / det
        l2 = (g11 * b2 - g12 * b1) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=1)

    def interpolation_matrix(self, points):
        face, bary = self.locate(points)
        bary = np.clip(bary, 0.0, None)
        bary /= bary.sum(axis=1, keepdims=True)
        rows = np.repeat(np.arange(len(face)), 3)
        return sp.csr_matrix((bary.reshape(-1), (rows, self.faces[face].reshape(-1))),
                             shape=(len(face), self.n_nodes))

    def metadata(self):
        meta = super().metadata()
        meta.update(level=self.level, quadrature=str(self.order), n_faces=int(self.faces.shape[0]))
        return meta

    def to_dict(self):
        return {"backend": "mesh", "n": 3, "level": self.level, "order": self.order,
                "vertices": self.vertices.tolist(), "faces": self.faces.tolist()}


def build_icosphere(level=4, order=3):
    """Icosahedral triangulation of ``S^2`` refined ``level`` times.

    Parameters
    ----------
    level : int
        Number of midpoint subdivisions (``20 * 4**level`` faces).
    order : int or "midpoint"
        Per-face quadrature, see :func:`triangle_rule`.

    Returns
    -------
    TriangleMesh
    """
    if level < 0:
        raise ValueError("level must be non-negative")
    v, f = _icosahedron()
    for _ in range(int(level)):
        v, f = _subdivide(v, f)
    return TriangleMesh(v, f, order=order, level=int(level))


# ----------------------------------------------------------------------------
# two-chart stereographic grids


def _fd_matrix(index, grid_idx, axis, h):
    """Finite-difference derivative along ``axis`` on an irregular node set."""
    nn = grid_idx.shape[0]
    shape = index.shape

    def lookup(offset):
        g = grid_idx.copy()
        g[:, axis] += offset
        ok = np.all((g >= 0) & (g < np.array(shape)), axis=1)
        out = np.full(nn, -1)
        out[ok] = index[tuple(g[ok].T)]
        return out

    p1, m1, p2, m2 = lookup(1), lookup(-1), lookup(2), lookup(-2)
    rows, cols, vals = [], [], []

    def add(mask, entries):
        r = np.nonzero(mask)[0]
        for col, coef in entries:
            rows.append(r)
            cols.append(col[mask] if isinstance(col, np.ndarray) else r)
            vals.append(np.full(r.size, coef / h))

    self_idx = None
    central = (p1 >= 0) & (m1 >= 0)
    add(central, [(p1, 0.5), (m1, -0.5)])
    fwd2 = ~central & (p1 >= 0) & (p2 >= 0)
    add(fwd2, [(self_idx, -1.5), (p1, 2.0), (p2, -0.5)])
    bwd2 = ~central & ~fwd2 & (m1 >= 0) & (m2 >= 0)
    add(bwd2, [(self_idx, 1.5), (m1, -2.0), (m2, 0.5)])
    fwd1 = ~central & ~fwd2 & ~bwd2 & (p1 >= 0)
    add(fwd1, [(self_idx, -1.0), (p1, 1.0)])
    bwd1 = ~central & ~fwd2 & ~bwd2 & ~fwd1 & (m1 >= 0)
    add(bwd1, [(self_idx, 1.0), (m1, -1.0)])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(nn, nn))


class ChartGrid(Domain):
    """Two stereographic charts of ``S^{n-1}`` sampled on Cartesian grids.

    Each chart covers the closed unit ball of ``R^{n-1}``, which the inverse
    projection from the opposite pole sends to a closed hemisphere. Nodes are
    the grid points ``h * k`` (``h = 2 / resolution``) whose cells meet the
    ball; a node's weight is the integral of the area density
    ``rho^{n-1} = (2 / (1 + |y|^2))^{n-1}`` over its cell intersected with
    the ball. Nodes double as quadrature points.

    Parameters
    ----------
    n : int
        Ambient dimension, 3 to 5.
    resolution : int
        Even number of grid cells across the ball diameter.
    subsamples : int
        Sub-cell samples per direction for cells cut by the boundary.
    """

    backend = "chart"

    def __init__(self, n, resolution=32, subsamples=8):
        n = int(n)
        if n < 3:
            raise ValueError("n must be at least 3")
        resolution = int(resolution)
        if resolution < 4 or resolution % 2:
            raise ValueError("resolution must be an even integer >= 4")
        d = n - 1
        h = 2.0 / resolution
        kmax = int(np.ceil((1.0 + h * np.sqrt(d) / 2.0) / h))
        ax = np.arange(-kmax, kmax + 1)
        grid = np.array(list(itertools.product(ax, repeat=d)), dtype=np.int64)
        centers = grid * h
        near = np.linalg.norm(np.maximum(np.abs(centers) - h / 2.0, 0.0), axis=1)
        keep = near < 1.0
        grid, centers = grid[keep], centers[keep]
        far = np.linalg.norm(np.abs(centers) + h / 2.0, axis=1)
        weights = self._cell_weights(centers, far <= 1.0, h, d, n, subsamples)

        self.resolution = resolution
        self.kmax = kmax
        self.grid_h = h
        self.subsamples = subsamples
        en = np.zeros(n)
        en[-1] = 1.0
        basis = np.eye(n)[:, :d]
        index = -np.ones((2 * kmax + 1,) * d, dtype=np.int64)
        index[tuple((grid + kmax).T)] = np.arange(grid.shape[0])
        self._index = index

        pts, frs, wts, charts, ys = [], [], [], [], []
        fd_blocks = [[] for _ in range(d)]
        for sign in (1.0, -1.0):
            x, dx = chart_to_sphere(centers, sign * en, basis, jacobian=True)
            rho = 2.0 / (1.0 + np.einsum("pi,pi->p", centers, centers))
            frame = dx / rho[:, None, None]
            flip = np.ones(d)
            if sign < 0:
                flip[0] = -1.0
            frame = frame * flip
            pts.append(x)
            frs.append(frame)
            wts.append(weights)
            charts.append(np.full(x.shape[0], int(sign)))
            ys.append(centers)
            for i in range(d):
                dmat = _fd_matrix(index, grid + kmax, i, h)
                fd_blocks[i].append(sp.diags(flip[i] / rho) @ dmat)

        x = np.concatenate(pts)
        grads = [sp.block_diag(b, format="csr") for b in fd_blocks]
        self.chart_of_node = np.concatenate(charts)
        self.chart_coords = np.concatenate(ys)
        self.grid_index = np.concatenate([grid, grid])
        super().__init__(n, x, np.concatenate(wts), np.concatenate(frs), x,
                         sp.identity(x.shape[0], format="csr"), grads, h)

    @staticmethod
    def _cell_weights(centers, inside, h, d, n, s):
        w = np.empty(centers.shape[0])
        g, gw = _gauss01(3)
        offs = np.array(list(itertools.product(g - 0.5, repeat=d))) * h
        ow = np.prod(np.array(list(itertools.product(gw, repeat=d))), axis=1) * h**d
        sub = (np.arange(s) + 0.5) / s - 0.5
        soff = np.array(list(itertools.product(sub, repeat=d))) * h
        sw = (h / s) ** d

        def density(y):
            return (2.0 / (1.0 + np.einsum("...i,...i->...", y, y))) ** (n - 1)

        ci = centers[inside]
        w[inside] = density(ci[:, None, :] + offs[None]) @ ow
        cb = centers[~inside]
        vals = np.empty(cb.shape[0])
        for start in range(0, cb.shape[0], 512):
            y = cb[start:start + 512, None, :] + soff[None]
            r2 = np.einsum("pki,pki->pk", y, y)
            vals[start:start + 512] = np.where(r2 <= 1.0, density(y), 0.0).sum(axis=1) * sw
        w[~inside] = vals
        return w

    def interpolation_matrix(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.n - 1
        en = np.zeros(self.n)
        en[-1] = 1.0
        basis = np.eye(self.n)[:, :d]
        north = pts[:, -1] >= 0.0
        offset = np.where(north, 0, self.n_nodes // 2)
        y = np.where(north[:, None], sphere_to_chart(np.where(north[:, None], pts, en), en, basis),
                     sphere_to_chart(np.where(north[:, None], -en, pts), -en, basis))
        u = y / self.grid_h
        base = np.floor(u).astype(np.int64)
        frac = u - base
        rows, cols, vals = [], [], []
        wsum = np.zeros(pts.shape[0])
        entries = []
        for corner in itertools.product((0, 1), repeat=d):
            c = np.array(corner)
            g = base + c + self.kmax
            ok = np.all((g >= 0) & (g < 2 * self.kmax + 1), axis=1)
            idx = np.full(pts.shape[0], -1)
            idx[ok] = self._index[tuple(g[ok].T)]
            wt = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
            good = idx >= 0
            wsum += np.where(good, wt, 0.0)
            entries.append((idx, wt, good))
        for idx, wt, good in entries:
            r = np.nonzero(good)[0]
            rows.append(r)
            cols.append(idx[good] + offset[good])
            vals.append(wt[good] / wsum[good])
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(pts.shape[0], self.n_nodes))

    def metadata(self):
        meta = super().metadata()
        meta.update(resolution=self.resolution, quadrature="cell-integrated")
        return meta

    def to_dict(self):
        return {"backend": "chart", "n": self.n, "resolution": self.resolution,
                "subsamples": self.subsamples}


def build_chart_grid(n, resolution=32, subsamples=8):
    """Two-chart stereographic grid for ``S^{n-1}``; see :class:`ChartGrid`."""
    return ChartGrid(n, resolution=resolution, subsamples=subsamples)


def domain_from_dict(data):
    """Rebuild a domain from :meth:`Domain.to_dict` output."""
    backend = data.get("backend")
    if backend == "mesh":
        return TriangleMesh(data["vertices"], data["faces"], order=data.get("order", 3),
                            level=data.get("level"))
    if backend == "chart":
        return ChartGrid(data["n"], data["resolution"], data.get("subsamples", 8))
    raise ValueError(f"unknown domain backend {backend!r}")
