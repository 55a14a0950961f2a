"""Maps from the sphere to Euclidean space.

Two representations are used side by side.

:class:`SmoothMap`
    A closed-form map defined on a neighbourhood of the sphere, with values
    and ambient Jacobian available at any point. Sampling such a map at the
    quadrature points is exact, so functionals are limited only by the
    quadrature rule.

:class:`SphereMap`
    Nodal values on a :class:`~confdeficit.domain.Domain`, optionally carrying
    the :class:`SmoothMap` they were sampled from. When the smooth map is
    present, values and tangential gradients at quadrature points come from it;
    otherwise they come from the domain's nodal operators.
"""

from __future__ import annotations

import itertools
from functools import cached_property

from math import lgamma

import numpy as np

__all__ = [
    "SmoothMap",
    "PolynomialField",
    "SphereMap",
    "identity",
    "constant",
    "linear_map",
    "power_map",
    "random_polynomial_field",
    "monomial_exponents",
    "sphere_moments",
    "tangential_gradient",
    "map_from_dict",
]

FD_STEP = 1e-6


def _fd_jacobian(func, x):
    x = np.atleast_2d(x)
    n = x.shape[1]
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = FD_STEP
        xp = x + e
        xm = x - e
        xp /= np.linalg.norm(xp, axis=1, keepdims=True)
        xm /= np.linalg.norm(xm, axis=1, keepdims=True)
        cols.append((func(xp) - func(xm)) / (2.0 * FD_STEP))
    return np.stack(cols, axis=2)


class SmoothMap:
    """Closed-form map with a Jacobian.

    Parameters
    ----------
    func : callable
        ``func(x) -> (P, m)`` for ``x`` of shape ``(P, n)``.
    jac : callable, optional
        ``jac(x) -> (P, m, n)``. Only its action on tangent vectors of the
        sphere is used. If omitted, central differences of
        ``func(x / |x|)`` with step ``1e-6`` are used.
    label : str
        Human readable description, kept in metadata.
    """

    def __init__(self, func, jac=None, label="map"):
        self._func = func
        self._jac = jac
        self.label = label

    def __call__(self, x):
        return np.asarray(self._func(np.atleast_2d(np.asarray(x, dtype=float))), dtype=float)

    def jacobian(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self._jac is None:
            return _fd_jacobian(self._func, x)
        return np.asarray(self._jac(x), dtype=float)

    @property
    def exact_jacobian(self):
        return self._jac is not None

    def _wrap(self, func, jac, label, exact=True):
        return SmoothMap(func, jac if exact else None, label)

    def __add__(self, other):
        if isinstance(other, SmoothMap):
            exact = self.exact_jacobian and other.exact_jacobian
            return self._wrap(lambda x: self(x) + other(x),
                              lambda x: self.jacobian(x) + other.jacobian(x),
                              f"({self.label} + {other.label})", exact)
        c = np.asarray(other, dtype=float)
        return self._wrap(lambda x: self(x) + c, self.jacobian, f"({self.label} + c)",
                          self.exact_jacobian)

    __radd__ = __add__

    def __neg__(self):
        return -1.0 * self

    def __sub__(self, other):
        return self + (-other if isinstance(other, SmoothMap) else -np.asarray(other, dtype=float))

    def __mul__(self, s):
        s = float(s)
        return self._wrap(lambda x: s * self(x), lambda x: s * self.jacobian(x),
                          f"{s:g}*{self.label}", self.exact_jacobian)

    __rmul__ = __mul__

    def linear(self, mat):
        """The map ``x -> mat @ f(x)``."""
        mat = np.asarray(mat, dtype=float)
        return self._wrap(lambda x: self(x) @ mat.T,
                          lambda x: np.einsum("ij,pjk->pik", mat, self.jacobian(x)),
                          f"A*{self.label}", self.exact_jacobian)

    def compose(self, inner):
        """The map ``x -> self(inner(x))``; ``inner`` needs ``__call__`` and ``jacobian``."""
        exact = self.exact_jacobian and getattr(inner, "exact_jacobian", True)

        def jac(x):
            y = inner(x)
            return np.einsum("pij,pjk->pik", self.jacobian(y), inner.jacobian(x))

        label = f"{self.label} o {getattr(inner, 'label', 'phi')}"
        return self._wrap(lambda x: self(inner(x)), jac, label, exact)

    def normalized(self):
        """The map ``f / |f|``."""
        def func(x):
            v = self(x)
            return v / np.linalg.norm(v, axis=1, keepdims=True)

        def jac(x):
            v = self(x)
            r = np.linalg.norm(v, axis=1)
            u = v / r[:, None]
            proj = np.eye(v.shape[1])[None] - u[:, :, None] * u[:, None, :]
            return np.einsum("pij,pjk->pik", proj, self.jacobian(x)) / r[:, None, None]

        return self._wrap(func, jac, f"{self.label}/|.|", self.exact_jacobian)


def identity(n):
    """The inclusion ``x -> x`` of ``S^{n-1}`` into ``R^n``."""
    eye = np.eye(n)
    return SmoothMap(lambda x: x.copy(), lambda x: np.broadcast_to(eye, (x.shape[0], n, n)).copy(),
                     "id")


def constant(c):
    c = np.asarray(c, dtype=float)
    return SmoothMap(lambda x: np.broadcast_to(c, (x.shape[0], c.size)).copy(),
                     lambda x: np.zeros((x.shape[0], c.size, x.shape[1])), "const")


def linear_map(mat):
    """The restriction of the linear map ``x -> mat @ x``."""
    mat = np.asarray(mat, dtype=float)
    return SmoothMap(lambda x: x @ mat.T, lambda x: np.broadcast_to(mat, (x.shape[0],) + mat.shape).copy(),
                     "linear")


class PolynomialField(SmoothMap):
    """Polynomial map ``x -> sum_t c_t x^{e_t}`` with an exact Jacobian.

    Parameters
    ----------
    exponents : ndarray of int, shape (T, n)
    coeffs : ndarray, shape (T, m)
    """

    def __init__(self, exponents, coeffs, label="poly"):
        self.exponents = np.asarray(exponents, dtype=np.int64)
        self.coeffs = np.asarray(coeffs, dtype=float)
        super().__init__(self._values, self._jacobian, label)

    def _powers(self, x):
        """``x_k^d`` for ``d = 0..max degree``, shape (n, P, D+1)."""
        x = np.atleast_2d(x)
        top = max(int(self.exponents.max()), 1)
        pw = np.ones((x.shape[1], x.shape[0], top + 1))
        for d in range(1, top + 1):
            pw[:, :, d] = pw[:, :, d - 1] * x.T
        return pw

    def monomials(self, x):
        pw = self._powers(x)
        out = np.ones((pw.shape[1], self.exponents.shape[0]))
        for k in range(pw.shape[0]):
            out *= pw[k][:, self.exponents[:, k]]
        return out

    def monomial_gradients(self, x):
        """Derivatives of each monomial, shape (P, T, n)."""
        pw = self._powers(x)
        n = pw.shape[0]
        factors = [pw[k][:, self.exponents[:, k]] for k in range(n)]
        out = np.empty((pw.shape[1], self.exponents.shape[0], n))
        for k in range(n):
            e = self.exponents[:, k]
            g = e * pw[k][:, np.maximum(e - 1, 0)]
            for j in range(n):
                if j != k:
                    g = g * factors[j]
            out[:, :, k] = g
        return out

    def _values(self, x):
        return self.monomials(x) @ self.coeffs

    def _jacobian(self, x):
        return np.einsum("ptk,tm->pmk", self.monomial_gradients(x), self.coeffs)

    def __add__(self, other):
        if isinstance(other, PolynomialField):
            return PolynomialField(np.concatenate([self.exponents, other.exponents]),
                                   np.concatenate([self.coeffs, other.coeffs]), self.label)
        return super().__add__(other)

    def __mul__(self, s):
        return PolynomialField(self.exponents, float(s) * self.coeffs, self.label)

    __rmul__ = __mul__


def monomial_exponents(n, degree):
    """All exponent vectors in ``n`` variables of total degree at most ``degree``."""
    out = [e for d in range(degree + 1)
           for e in itertools.product(range(d + 1), repeat=n) if sum(e) == d]
    return np.array(out, dtype=np.int64)


def sphere_moments(exponents):
    """Exact normalized sphere averages ``fint x^a`` of monomials.

    Zero unless every exponent is even; otherwise
    ``Gamma(n/2) prod Gamma((a_i + 1)/2) / (pi^{n/2} Gamma((|a| + n)/2))``.
    """
    exps = np.atleast_2d(np.asarray(exponents))
    n = exps.shape[1]
    out = np.zeros(exps.shape[0])
    for t, a in enumerate(exps):
        if np.any(a % 2):
            continue
        log_m = (lgamma(n / 2.0) + sum(lgamma((ai + 1) / 2.0) for ai in a)
                 - n / 2.0 * np.log(np.pi) - lgamma((a.sum() + n) / 2.0))
        out[t] = np.exp(log_m)
    return out


def random_polynomial_field(n, degree=3, rng=None, scale=1.0, mean_free=False):
    """Random polynomial vector field with Gaussian coefficients.

    Coefficients of degree ``d`` terms are damped by ``1 / (1 + d)`` so that
    the field and its gradient stay of order ``scale`` on the sphere. With
    ``mean_free`` the constant term is chosen so that the sphere average
    vanishes exactly.
    """
    rng = np.random.default_rng(rng)
    exps = monomial_exponents(n, degree)
    damp = 1.0 / (1.0 + exps.sum(axis=1))
    coeffs = rng.standard_normal((exps.shape[0], n)) * damp[:, None]
    coeffs *= scale / np.sqrt((coeffs**2).sum() / n)
    if mean_free:
        const = exps.sum(axis=1) == 0
        coeffs[const] = 0.0
        coeffs[const] = -sphere_moments(exps) @ coeffs
    return PolynomialField(exps, coeffs, f"poly{degree}")


def power_map(k):
    """The map ``z -> z^k`` of ``S^2`` through stereographic projection.

    For ``k < 0`` the map is ``z -> conj(z)^{|k|}``, which has degree ``k``;
    ``k = 0`` gives the constant map ``e_1``. The Jacobian is computed by
    central differences.
    """
    k = int(k)

    def func(x):
        north = x[:, 2] >= 0.0
        a = np.where(north, x[:, 0] + 1j * x[:, 1], 1.0 - x[:, 2])
        b = np.where(north, 1.0 + x[:, 2], x[:, 0] - 1j * x[:, 1])
        if k < 0:
            a, b = np.conj(a), np.conj(b)
        a, b = a ** abs(k), b ** abs(k)
        ab = a * np.conj(b)
        aa, bb = np.abs(a) ** 2, np.abs(b) ** 2
        s = aa + bb
        return np.stack([2.0 * ab.real / s, 2.0 * ab.imag / s, (bb - aa) / s], axis=1)

    return SmoothMap(func, None, f"z^{k}")


class SphereMap:
    """A map ``u : S^{n-1} -> R^m`` on a discretized sphere.

    Parameters
    ----------
    domain : Domain
    values : ndarray, shape (N, m)
        Nodal values.
    smooth : SmoothMap, optional
        Closed-form map the values were sampled from. When present it is used
        for exact sampling at quadrature points and exact precomposition.

    Notes
    -----
    Instances are immutable; every operation returns a new map.
    """

    def __init__(self, domain, values, smooth=None):
        self.domain = domain
        vals = np.array(values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != domain.n_nodes:
            raise ValueError(f"values must have shape ({domain.n_nodes}, m)")
        vals.setflags(write=False)
        self.values = vals
        self.smooth = smooth

    @classmethod
    def from_smooth(cls, domain, f):
        """Sample a :class:`SmoothMap` on ``domain``."""
        return cls(domain, f(domain.nodes), smooth=f)

    @property
    def is_smooth(self):
        return self.smooth is not None

    @property
    def dim(self):
        return self.values.shape[1]

    @cached_property
    def _sample(self):
        dom = self.domain
        if self.smooth is not None:
            vals = self.smooth(dom.points)
            grad = np.einsum("qij,qjk->qik", self.smooth.jacobian(dom.points), dom.frames)
        else:
            vals, grad = dom.sample_nodal(self.values)
        vals.setflags(write=False)
        grad.setflags(write=False)
        return vals, grad

    @property
    def qvalues(self):
        """Values at quadrature points, shape (Q, m)."""
        return self._sample[0]

    @property
    def gradient(self):
        """Tangential gradient at quadrature points, shape (Q, m, n-1)."""
        return self._sample[1]

    # ----- arithmetic ------------------------------------------------------
    def _combine(self, other, op_nodal, op_smooth):
        if isinstance(other, SphereMap):
            if self.smooth is not None and other.smooth is not None:
                return SphereMap.from_smooth(self.domain, op_smooth(self.smooth, other.smooth))
            return SphereMap(self.domain, op_nodal(self.values, other.values))
        if isinstance(other, SmoothMap):
            if self.smooth is not None:
                return SphereMap.from_smooth(self.domain, op_smooth(self.smooth, other))
            return SphereMap(self.domain, op_nodal(self.values, other(self.domain.nodes)))
        c = np.asarray(other, dtype=float)
        if self.smooth is not None:
            return SphereMap.from_smooth(self.domain, op_smooth(self.smooth, c))
        return SphereMap(self.domain, op_nodal(self.values, c))

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b, lambda a, b: a - b)

    def __mul__(self, s):
        s = float(s)
        if self.smooth is not None:
            return SphereMap.from_smooth(self.domain, s * self.smooth)
        return SphereMap(self.domain, s * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return -1.0 * self

    def __truediv__(self, s):
        return self * (1.0 / float(s))

    def linear(self, mat):
        """The map ``x -> mat @ u(x)``."""
        mat = np.asarray(mat, dtype=float)
        if self.smooth is not None:
            return SphereMap.from_smooth(self.domain, self.smooth.linear(mat))
        return SphereMap(self.domain, self.values @ mat.T)

    def mean(self):
        """Normalized integral of ``u`` over the sphere."""
        return self.domain.integrate(self.qvalues)

    def centered(self):
        """``u - fint u``."""
        return self - self.mean()

    def normalized(self):
        """``u / |u|`` (nodal values are normalized node by node)."""
        if self.smooth is not None:
            return SphereMap.from_smooth(self.domain, self.smooth.normalized())
        v = self.values
        return SphereMap(self.domain, v / np.linalg.norm(v, axis=1, keepdims=True))

    def precompose(self, phi):
        """The map ``u o phi`` for a self-map ``phi`` of the sphere.

        Exact when ``u`` carries a smooth representative; otherwise the nodal
        values are resampled by interpolation at ``phi(nodes)``.
        """
        if self.smooth is not None:
            return SphereMap.from_smooth(self.domain, self.smooth.compose(phi))
        target = phi(self.domain.nodes)
        target = target / np.linalg.norm(target, axis=1, keepdims=True)
        return SphereMap(self.domain, self.domain.interpolation_matrix(target) @ self.values)

    def to_nodal(self):
        """Drop the smooth representative."""
        return SphereMap(self.domain, self.values)

    def to_dict(self):
        return {"domain": self.domain.to_dict(), "values": self.values.tolist()}


def tangential_gradient(u):
    """Tangential gradient of ``u`` at the quadrature points, shape (Q, m, n-1)."""
    return u.gradient


def map_from_dict(data, domain=None):
    """Rebuild a nodal :class:`SphereMap` from :meth:`SphereMap.to_dict` output."""
    from .domain import domain_from_dict

    dom = domain if domain is not None else domain_from_dict(data["domain"])
    return SphereMap(dom, np.asarray(data["values"], dtype=float))
