"""Second-order analysis of the deficit around the identity.

For a perturbation ``w`` of the identity the module provides

* the operator ``A(w) = (div w) x - sum_j x_j grad_T w^j`` and the
  quadratic form
  ``Q_n(w) = n/(2(n-1)) fint |grad w|^2 + n(n-3)/(2(n-1)^2) fint (div w)^2
  - n/2 fint <w, A(w)>``, the Hessian of the deficit at the identity;
* the exact expansion of ``V(id + w)`` in the elementary symmetric functions
  ``sigma_k`` of ``M = grad_T w P_T^t``;
* the pointwise lower bound for the energy of ``id + w`` with the nonlinear
  correction ``N(P_T, grad w)`` and the associated forms ``Xi_n``,
  ``tilde Q_n`` and ``R_n``;
* Galerkin assembly of ``Q_n`` on a finite basis, the kernel of ``Q_n`` on
  ``H_n = {fint w = 0, fint <w, x> = 0}`` (the infinitesimal Moebius maps),
  and the coercivity spectrum of ``Q_n`` on the complement of that kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import EigenSolverStalled, IllConditionedBasis
from .maps import PolynomialField, SmoothMap, SphereMap, identity, monomial_exponents
from .moebius import algebra_basis

__all__ = [
    "ambient_gradient",
    "divergence",
    "apply_A",
    "q_n",
    "rayleigh_quotient",
    "sigma_k",
    "sigma_k_grad",
    "volume_expansion",
    "VolumeExpansion",
    "nonlinear_weight",
    "fz_margin",
    "fz_lower_expansion",
    "fz_constant",
    "FZReport",
    "xi_n",
    "q_tilde",
    "r_n",
    "interpolation_bound_check",
    "w12_inner",
    "KernelBasis",
    "kernel_basis",
    "project_kernel",
    "FieldBasis",
    "polynomial_basis",
    "nodal_basis",
    "QuadraticAssembly",
    "SpectrumReport",
    "coercivity_spectrum",
]


# ----------------------------------------------------------------------------
# pointwise quantities


def ambient_gradient(w):
    """``M = grad_T w P_T^t`` at quadrature points, shape (Q, n, n).

    Row ``j`` is the tangential gradient of ``w^j`` as an ambient vector.
    """
    return np.einsum("qji,qki->qjk", w.gradient, w.domain.frames)


def divergence(w):
    """Tangential divergence ``div_S w = tr M``."""
    return np.einsum("qii->q", ambient_gradient(w))


def apply_A(w):
    """``A(w) = (div w) x - sum_j x_j grad_T w^j`` at quadrature points."""
    x = w.domain.points
    M = ambient_gradient(w)
    div = np.einsum("qii->q", M)
    return div[:, None] * x - np.einsum("qjk,qj->qk", M, x)


def q_n(w):
    """Quadratic form ``Q_n(w)`` by direct quadrature."""
    dom = w.domain
    n = dom.n
    grad = w.gradient
    g2 = dom.integrate(np.einsum("qij,qij->q", grad, grad))
    div2 = dom.integrate(divergence(w) ** 2)
    waw = dom.integrate(np.einsum("qi,qi->q", w.qvalues, apply_A(w)))
    return float(n / (2.0 * (n - 1)) * g2 + n * (n - 3) / (2.0 * (n - 1) ** 2) * div2 - n / 2.0 * waw)


def rayleigh_quotient(w):
    """``Q_n(w) / fint |grad w|^2``."""
    grad = w.gradient
    return q_n(w) / float(w.domain.integrate(np.einsum("qij,qij->q", grad, grad)))


def sigma_k(A, k):
    """Elementary symmetric function ``sigma_k`` of the eigenvalues of ``A``.

    Parameters
    ----------
    A : ndarray, shape (..., n, n)
    k : int

    Notes
    -----
    Uses Newton's identities with power sums ``p_j = tr A^j``.
    """
    return _sigma_and_grad(np.asarray(A, dtype=float), k, grad=False)[0]


def sigma_k_grad(A, k):
    """Gradient ``d sigma_k / d A`` with entries ``d sigma_k / d A_ij``.

    For ``k = 1`` this is the identity, for ``k = 2`` it is
    ``tr(A) I - A^t`` and for ``k = n`` the cofactor matrix of ``A``.
    """
    return _sigma_and_grad(np.asarray(A, dtype=float), k, grad=True)[1]


def _sigma_and_grad(A, k, grad):
    n = A.shape[-1]
    eye = np.broadcast_to(np.eye(n), A.shape)
    powers = [eye]
    for _ in range(k):
        powers.append(powers[-1] @ A)
    p = [None] + [np.trace(powers[j], axis1=-2, axis2=-1) for j in range(1, k + 1)]
    e = [np.ones(A.shape[:-2])]
    de = [np.zeros(A.shape)]
    for m in range(1, k + 1):
        val = sum((-1) ** (j - 1) * e[m - j] * p[j] for j in range(1, m + 1)) / m
        e.append(val)
        if grad:
            dval = sum((-1) ** (j - 1) * (de[m - j] * p[j][..., None, None]
                                          + e[m - j][..., None, None] * j * np.swapaxes(powers[j - 1], -1, -2))
                       for j in range(1, m + 1)) / m
            de.append(dval)
    return e[k], (de[k] if grad else None)


@dataclass
class VolumeExpansion:
    """Expansion ``V(id + w) = 1 + sum_k t_k``.

    Attributes
    ----------
    terms : list of float
        ``t_k = (n/k) fint <w, S_k(M) x>`` for ``k = 1..n``, where ``S_k`` is
        the gradient of ``sigma_k`` and ``M = grad_T w P_T^t``. ``t_1`` vanishes
        when ``fint <w, x> = 0``, ``t_2 = n/2 fint <w, A(w)>`` and
        ``t_n = V(w)``.
    volume : float
        ``V(id + w)`` by direct quadrature.
    residual : float
        ``volume - 1 - sum(terms)``.
    """

    terms: list
    volume: float
    residual: float


def volume_expansion(w):
    """Term-by-term volume expansion of ``id + w``; see :class:`VolumeExpansion`."""
    from .functionals import volume

    dom = w.domain
    n = dom.n
    x = dom.points
    M = ambient_gradient(w)
    terms = []
    for k in range(1, n + 1):
        vec = np.einsum("qij,qj->qi", sigma_k_grad(M, k), x)
        terms.append(float(n / k * dom.integrate(np.einsum("qi,qi->q", w.qvalues, vec))))
    vol = volume(SphereMap.from_smooth(dom, identity(n)) + w)
    return VolumeExpansion(terms, vol, vol - 1.0 - sum(terms))


def nonlinear_weight(P, Y):
    """``|N(P, Y)|^{n-3}``, the weight of the lower-order correction in the energy lower bound.

    ``N(X, Y) = X / |X|`` if ``|X| <= |X + Y|``, otherwise
    ``(|X+Y| / |X|)^{1/(n-3)} (X + Y) / |X|``; norms are Frobenius norms of
    ``n x (n-1)`` matrices. For ``n = 3`` the weight is identically one.
    """
    n = P.shape[1]
    a = np.sqrt(np.einsum("qij,qij->q", P, P))
    b = np.sqrt(np.einsum("qij,qij->q", P + Y, P + Y))
    if n == 3:
        return np.ones_like(a)
    r = b / a
    return np.where(a <= b, 1.0, r ** (n - 2))


def _fz_parts(w):
    dom = w.domain
    n = dom.n
    P = dom.frames
    Y = w.gradient
    a = np.sqrt(n - 1.0)
    b = np.sqrt(np.einsum("qij,qij->q", P + Y, P + Y))
    y2 = np.einsum("qij,qij->q", Y, Y)
    py = np.einsum("qij,qij->q", P, Y)
    weight = nonlinear_weight(P, Y)
    gap = (a - b) ** 2
    lhs = (b**2 / (n - 1.0)) ** ((n - 1) / 2.0)
    return lhs, py, y2, weight, gap


@dataclass
class FZReport:
    """Pointwise and integrated lower bound for the energy of ``id + w``.

    Attributes
    ----------
    min_margin : float
        Smallest pointwise ``lhs - rhs``.
    energy : float
        ``D(id + w)``.
    lower_bound : float
        Integrated right-hand side without the ``P_T : grad w`` term, which
        integrates to zero on ``H_n``.
    residual : float
        ``energy - lower_bound``.
    kappa, c : float
    """

    min_margin: float
    energy: float
    lower_bound: float
    residual: float
    kappa: float
    c: float


def fz_margin(w, kappa, c):
    """Pointwise margin of the normalized lower bound

    ``(|P + Y|^2/(n-1))^{(n-1)/2} >= 1 + P:Y + (1-kappa)/2 |Y|^2 + c |Y|^{n-1}
    + (1-kappa)(n-3)/2 |N|^{n-3} (|P| - |P+Y|)^2``.
    """
    n = w.domain.n
    lhs, py, y2, weight, gap = _fz_parts(w)
    rhs = (1.0 + py + 0.5 * (1.0 - kappa) * y2 + c * y2 ** ((n - 1) / 2.0)
           + 0.5 * (1.0 - kappa) * (n - 3) * weight * gap)
    return lhs - rhs


def fz_lower_expansion(w, kappa=0.5, c=0.0):
    """Check the energy lower bound pointwise and after integration.

    Returns
    -------
    FZReport
    """
    dom = w.domain
    n = dom.n
    lhs, py, y2, weight, gap = _fz_parts(w)
    margin = fz_margin(w, kappa, c)
    lower = 1.0 + dom.integrate(0.5 * (1.0 - kappa) * y2 + c * y2 ** ((n - 1) / 2.0)
                                + 0.5 * (1.0 - kappa) * (n - 3) * weight * gap)
    energy = float(dom.integrate(lhs))
    return FZReport(float(margin.min()), energy, float(lower), energy - float(lower),
                    float(kappa), float(c))


def fz_constant(fields, kappa):
    """Largest ``c >= 0`` keeping the pointwise bound valid on all ``fields``.

    The margin is affine in ``c``; the answer is the smallest ratio of the
    ``c = 0`` margin to ``|grad w|^{n-1}`` over all quadrature points.
    """
    best = np.inf
    for w in fields:
        n = w.domain.n
        base = fz_margin(w, kappa, 0.0)
        y2 = np.einsum("qij,qij->q", w.gradient, w.gradient)
        scale = y2 ** ((n - 1) / 2.0)
        ok = scale > 1e-14
        if np.any(ok):
            best = min(best, float((base[ok] / scale[ok]).min()))
    return max(best, 0.0)


def xi_n(w):
    """``Xi_n(w) = n(n-3)/(2(n-1)) fint |N|^{n-3} (|P_T + grad w| - |P_T|)^2``."""
    n = w.domain.n
    _, _, _, weight, gap = _fz_parts(w)
    return float(n * (n - 3) / (2.0 * (n - 1)) * w.domain.integrate(weight * gap))


def q_tilde(w):
    """``n/(2(n-1)) fint |grad w|^2 - n/2 fint <w, A(w)> + Xi_n(w)``."""
    dom = w.domain
    n = dom.n
    grad = w.gradient
    g2 = dom.integrate(np.einsum("qij,qij->q", grad, grad))
    waw = dom.integrate(np.einsum("qi,qi->q", w.qvalues, apply_A(w)))
    return float(n / (2.0 * (n - 1)) * g2 - n / 2.0 * waw) + xi_n(w)


def r_n(w):
    """``tilde Q_n(w) - Q_n(w)``, computed from its own integrand."""
    dom = w.domain
    n = dom.n
    _, _, _, weight, gap = _fz_parts(w)
    integrand = weight * gap - divergence(w) ** 2 / (n - 1.0)
    return float(n * (n - 3) / (2.0 * (n - 1)) * dom.integrate(integrand))


def interpolation_bound_check(w):
    """Diagnostic for the interpolation bound on the intermediate volume terms.

    For ``k = 3..n-1`` reports

    * ``term``: ``|fint <w, S_k(M) x>|``;
    * ``middle``: ``fint |w| |grad w|^{k-1}``;
    * ``rhs``: ``(fint |grad w|^2)^{1+a} + (fint |grad w|^{n-1})^{1+b}`` with
      ``a = 1/(2(n-1))`` and ``b = (n+1) a / n``;

    and the ratios ``term/rhs`` and ``middle/rhs``. Empty for ``n = 3``.
    """
    dom = w.domain
    n = dom.n
    a = 1.0 / (2.0 * (n - 1))
    b = (n + 1) * a / n
    grad = w.gradient
    gn = np.sqrt(np.einsum("qij,qij->q", grad, grad))
    rhs = dom.integrate(gn**2) ** (1 + a) + dom.integrate(gn ** (n - 1)) ** (1 + b)
    M = ambient_gradient(w)
    wn = np.linalg.norm(w.qvalues, axis=1)
    out = []
    for k in range(3, n):
        vec = np.einsum("qij,qj->qi", sigma_k_grad(M, k), dom.points)
        term = abs(float(dom.integrate(np.einsum("qi,qi->q", w.qvalues, vec))))
        middle = float(dom.integrate(wn * gn ** (k - 1)))
        out.append({"k": k, "term": term, "middle": middle, "rhs": float(rhs),
                    "term_ratio": term / rhs, "middle_ratio": middle / rhs})
    return out


# ----------------------------------------------------------------------------
# kernel of Q_n


def w12_inner(u, v):
    """``fint <u, v> + fint grad u : grad v``."""
    dom = u.domain
    return float(dom.integrate(np.einsum("qi,qi->q", u.qvalues, v.qvalues))
                 + dom.integrate(np.einsum("qij,qij->q", u.gradient, v.gradient)))


class KernelBasis:
    """``W^{1,2}``-orthonormal basis of the infinitesimal Moebius fields in ``H_n``.

    The fields are the rotations ``S x`` and the mean-free dilations
    ``<x, xi> x - xi / n``; there are ``n(n+1)/2`` of them.

    Attributes
    ----------
    fields : list of SphereMap
        Orthonormal basis, sampled exactly from closed forms.
    condition : float
        Condition number of the raw Gram matrix.
    """

    def __init__(self, domain, max_condition=1e8):
        n = domain.n
        params = []
        for X in algebra_basis(n):
            params.append((X.S, X.mu * X.xi))
        raw = [SphereMap.from_smooth(domain, _kernel_field(S, v)) for S, v in params]
        gram = np.array([[w12_inner(a, b) for b in raw] for a in raw])
        ev = np.linalg.eigvalsh(gram)
        self.condition = float(ev.max() / ev.min()) if ev.min() > 0 else np.inf
        if not self.condition < max_condition:
            raise IllConditionedBasis(f"kernel Gram condition number {self.condition:.3g}")
        L = np.linalg.cholesky(gram)
        T = np.linalg.inv(L)  # rows give orthonormal combinations
        self.domain = domain
        self.raw = raw
        self.transform = T
        self._S = np.array([S for S, _ in params])
        self._v = np.array([v for _, v in params])
        self.fields = [self.combine(e) for e in np.eye(len(raw))]

    def combine(self, coeffs):
        """The field ``sum_j coeffs[j] * fields[j]`` as one closed-form map."""
        raw_coeffs = np.asarray(coeffs, dtype=float) @ self.transform
        S = np.tensordot(raw_coeffs, self._S, axes=1)
        v = raw_coeffs @ self._v
        return SphereMap.from_smooth(self.domain, _kernel_field(S, v))

    @property
    def dim(self):
        return len(self.fields)

    def coefficients(self, w):
        """``W^{1,2}`` inner products of ``w`` with the orthonormal fields."""
        return np.array([w12_inner(w, f) for f in self.fields])


def _kernel_field(S, v):
    """``x -> S x + <x, v> x - v / n``: a mean-free infinitesimal Moebius field."""
    n = S.shape[0]

    def func(x):
        x = np.atleast_2d(x)
        return x @ S.T + (x @ v)[:, None] * x - v / n

    def jac(x):
        x = np.atleast_2d(x)
        return S[None] + x[:, :, None] * v[None, None, :] + (x @ v)[:, None, None] * np.eye(n)[None]

    return SmoothMap(func, jac, "kernel-field")


def kernel_basis(domain):
    """Build the :class:`KernelBasis` of a domain (cached on the domain)."""
    kb = getattr(domain, "_kernel_basis", None)
    if kb is None:
        kb = KernelBasis(domain)
        domain._kernel_basis = kb
    return kb


@dataclass
class KernelProjection:
    """Result of :func:`project_kernel`.

    Attributes
    ----------
    projection : SphereMap
        ``Pi w`` in the kernel.
    coefficients : ndarray
        Coordinates of ``Pi w`` in the orthonormal kernel basis.
    remainder_norm : float
        ``W^{1,2}`` norm of ``w - Pi w``.
    orthogonality : float
        Largest ``|<w - Pi w, K_j>_{W^{1,2}}|``, which should vanish.
    """

    projection: SphereMap
    coefficients: np.ndarray
    remainder_norm: float
    orthogonality: float


def project_kernel(w, basis=None):
    """``W^{1,2}``-orthogonal projection of ``w`` onto the kernel of ``Q_n``."""
    kb = basis or kernel_basis(w.domain)
    c = kb.coefficients(w)
    proj = kb.combine(c)
    rem = w - proj
    ortho = float(np.abs(kb.coefficients(rem)).max())
    return KernelProjection(proj, c, float(np.sqrt(max(w12_inner(rem, rem), 0.0))), ortho)


# ----------------------------------------------------------------------------
# Galerkin assembly


class FieldBasis:
    """Finite basis for each component of a vector field.

    Parameters
    ----------
    domain : Domain
    values : ndarray or sparse matrix, shape (Q, K)
        Basis functions at quadrature points.
    grads : list of the same, length n-1
        Frame derivatives at quadrature points.
    kind : str
    to_map : callable
        ``to_map(C)`` turns a coefficient array (K, n) into a SphereMap.
    project : callable
        ``project(w)`` gives coefficients (K, n) of a SphereMap in the basis.
    """

    def __init__(self, domain, values, grads, kind, to_map, project):
        self.domain = domain
        self.values = values
        self.grads = grads
        self.kind = kind
        self._to_map = to_map
        self._project = project

    @property
    def size(self):
        return self.values.shape[1]

    def to_map(self, coeffs):
        return self._to_map(np.asarray(coeffs, dtype=float).reshape(self.domain.n, self.size).T)

    def project(self, w):
        """Stacked coefficient vector (component-major) of ``w``."""
        return np.asarray(self._project(w)).T.reshape(-1)


def polynomial_basis(domain, degree):
    """Restrictions of polynomials of degree ``<= degree``, orthonormal in ``W^{1,2}``.

    Monomials of degree ``degree`` and ``degree - 1`` span all polynomial
    restrictions of degree ``<= degree`` on the sphere. They are
    orthonormalized through an eigendecomposition of their ``W^{1,2}`` Gram
    matrix, discarding relative eigenvalues below ``1e-10``.
    """
    n = domain.n
    exps = monomial_exponents(n, degree)
    exps = exps[exps.sum(axis=1) >= degree - 1]
    poly = PolynomialField(exps, np.zeros((exps.shape[0], 1)))
    x = domain.points
    P = poly.monomials(x)
    dP = np.einsum("qtk,qki->qti", poly.monomial_gradients(x), domain.frames)
    w = domain.weights
    gram = P.T @ (w[:, None] * P) + np.einsum("qti,q,qsi->ts", dP, w, dP)
    ev, V = np.linalg.eigh(gram)
    keep = ev > 1e-10 * ev.max()
    T = V[:, keep] / np.sqrt(ev[keep])
    values = P @ T
    grads = [dP[:, :, i] @ T for i in range(n - 1)]

    def to_map(C):
        return SphereMap.from_smooth(domain, PolynomialField(exps, T @ C, f"poly{degree}"))

    def project(wmap):
        # W^{1,2} inner products with an orthonormal basis
        vals = values.T @ (w[:, None] * wmap.qvalues)
        for i in range(n - 1):
            vals += grads[i].T @ (w[:, None] * wmap.gradient[:, :, i])
        return vals

    return FieldBasis(domain, values, grads, f"polynomial(degree={degree})", to_map, project)


def nodal_basis(domain):
    """The domain's own nodal basis (hat functions or grid values)."""
    def to_map(C):
        return SphereMap(domain, C)

    def project(wmap):
        return wmap.values

    return FieldBasis(domain, domain.interp, domain.grads, f"nodal({domain.backend})", to_map, project)


def _wmul(w, X):
    if sp.issparse(X):
        return sp.diags(w) @ X
    return w[:, None] * X


def _gram(X, w, Y):
    out = X.T @ _wmul(w, Y)
    return out.toarray() if sp.issparse(out) else np.asarray(out)


class QuadraticAssembly:
    """Matrices of ``Q_n`` and related forms on a :class:`FieldBasis`.

    A vector field is a stacked coefficient vector ``c = (c_1, ..., c_n)``,
    one block of size ``K`` per component.

    Attributes
    ----------
    form : ndarray, shape (nK, nK)
        Symmetric matrix with ``c^t form c = Q_n(w_c)``.
    l2, seminorm, w12 : ndarray, shape (nK, nK)
        ``fint |w|^2``, ``fint |grad w|^2`` and their sum.
    constraints : ndarray, shape (n+1, nK)
        ``fint w`` (n rows) and ``fint <w, x>``.
    kernel : ndarray, shape (nK, d)
        ``W^{1,2}``-orthonormal coordinates of the kernel fields.
    """

    def __init__(self, basis, max_condition=1e8):
        self.basis = basis
        dom = basis.domain
        n = dom.n
        w = dom.weights
        x = dom.points
        B, G = basis.values, basis.grads
        K = basis.size
        mass = _gram(B, w, B)
        stiff = sum(_gram(g, w, g) for g in G)
        D = [reduce(lambda a, b: a + b, [_wmul(dom.frames[:, l, i], G[i]) for i in range(n - 1)])
             for l in range(n)]
        eye = np.eye(n)
        self.l2 = np.kron(eye, mass)
        self.seminorm = np.kron(eye, stiff)
        self.w12 = self.l2 + self.seminorm
        div = np.block([[_gram(D[l], w, D[m]) for m in range(n)] for l in range(n)])
        aform = np.block([[_gram(B, w, _wmul(x[:, l], D[m]) - _wmul(x[:, m], D[l])) for m in range(n)]
                          for l in range(n)])
        aform = 0.5 * (aform + aform.T)
        self.aform = aform
        self.divform = div
        self.form = (n / (2.0 * (n - 1)) * self.seminorm + n * (n - 3) / (2.0 * (n - 1) ** 2) * div
                     - n / 2.0 * aform)
        bw = np.asarray(B.T @ w).reshape(-1)
        cons = np.zeros((n + 1, n * K))
        for l in range(n):
            cons[l, l * K:(l + 1) * K] = bw
            cons[n, l * K:(l + 1) * K] = np.asarray(B.T @ (w * x[:, l])).reshape(-1)
        self.constraints = cons
        kb = kernel_basis(dom)
        raw = np.array([basis.project(f) for f in kb.fields]).T          # (nK, d)
        gram = raw.T @ self.w12 @ raw
        ev = np.linalg.eigvalsh(gram)
        cond = ev.max() / ev.min() if ev.min() > 0 else np.inf
        if not cond < max_condition:
            raise IllConditionedBasis(f"discrete kernel Gram condition number {cond:.3g}")
        self.kernel = raw @ np.linalg.inv(np.linalg.cholesky(gram)).T
        self.n = n
        self.K = K

    def quadratic(self, c):
        c = np.asarray(c, dtype=float)
        return float(c @ self.form @ c)

    def field(self, c):
        return self.basis.to_map(c)

    def _subspace(self, with_kernel):
        rows = [self.constraints]
        if with_kernel:
            rows.append((self.w12 @ self.kernel).T)
        return sla.null_space(np.vstack(rows))

    def kernel_dimension(self, threshold=1e-6):
        """Eigenvalues of ``Q_n`` against ``W^{1,2}`` on ``H_n`` below ``threshold``."""
        Z = self._subspace(False)
        ev = sla.eigh(Z.T @ self.form @ Z, Z.T @ self.w12 @ Z, eigvals_only=True)
        return int(np.sum(ev < threshold)), ev

    def kernel_dual_norms(self):
        """Dual ``W^{1,2}`` norm of ``form @ k`` for each kernel vector ``k``."""
        Z = self._subspace(False)
        g = Z.T @ self.w12 @ Z
        out = []
        for k in self.kernel.T:
            r = Z.T @ (self.form @ k)
            out.append(float(np.sqrt(max(r @ np.linalg.solve(g, r), 0.0))))
        return np.array(out)


@dataclass
class SpectrumReport:
    """Bottom of the spectrum of ``Q_n`` on ``H_n`` minus its kernel.

    Eigenvalues are those of the pencil ``(Q_n, fint |grad w|^2)``, so the
    smallest one is the best constant in the linear stability estimate for
    the chosen basis.
    """

    eigenvalues: list
    residuals: list
    kernel_dimension: int
    basis: str
    subspace_dimension: int
    metadata: dict = field(default_factory=dict)


def coercivity_spectrum(domain, m=6, basis="polynomial", degree=None, regularization=1e-12,
                        kernel_threshold=1e-6):
    """Smallest ``m`` eigenvalues of ``Q_n`` on ``H_n`` orthogonal to the kernel.

    Parameters
    ----------
    domain : Domain
    m : int
    basis : {"polynomial", "nodal"} or FieldBasis
    degree : int, optional
        Polynomial degree; defaults to ``level + 2`` on meshes and 5 otherwise.
    regularization : float
        Multiple of the ``L^2`` Gram matrix added to the seminorm.

    Raises
    ------
    EigenSolverStalled
        If the dense generalized eigensolver fails or residuals exceed ``1e-6``.
    """
    if isinstance(basis, FieldBasis):
        fb = basis
    elif basis == "polynomial":
        if degree is None:
            level = getattr(domain, "level", None)
            degree = level + 2 if level is not None else 5
        fb = polynomial_basis(domain, degree)
    elif basis == "nodal":
        if domain.n * domain.n_nodes > 4000:
            raise ValueError("nodal spectrum is dense; use the polynomial basis on fine domains")
        fb = nodal_basis(domain)
    else:
        raise ValueError(f"unknown basis {basis!r}")
    asm = QuadraticAssembly(fb)
    kdim, _ = asm.kernel_dimension(kernel_threshold)
    Z = asm._subspace(True)
    A = Z.T @ asm.form @ Z
    A = 0.5 * (A + A.T)
    Bm = Z.T @ (asm.seminorm + regularization * asm.l2) @ Z
    Bm = 0.5 * (Bm + Bm.T)
    m = min(m, A.shape[0])
    try:
        ev, vec = sla.eigh(A, Bm, subset_by_index=[0, m - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverStalled(str(exc)) from exc
    res = [float(np.linalg.norm(A @ v - lam * (Bm @ v)) / max(np.linalg.norm(A @ v), 1e-300))
           for lam, v in zip(ev, vec.T)]
    if max(res) > 1e-6:
        raise EigenSolverStalled(f"eigen residual {max(res):.3g}")
    meta = dict(domain.metadata())
    meta.update(regularization=regularization, kernel_threshold=kernel_threshold)
    return SpectrumReport([float(v) for v in ev], res, kdim, fb.kind, int(Z.shape[1]), meta)
