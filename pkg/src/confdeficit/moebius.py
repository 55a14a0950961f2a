"""Conformal self-maps of the sphere.

Every conformal diffeomorphism of ``S^{n-1}`` (``n >= 3``) can be written as
``O phi_{xi, lam}`` with ``O`` orthogonal, ``xi`` a unit vector and
``lam > 0``. The map ``phi_{xi, lam}`` fixes ``+-xi``, stretches by ``lam``
at ``xi`` and by ``1/lam`` at ``-xi``; for large ``lam`` it blows up a small
cap around ``xi`` onto almost the whole sphere. The pairs ``(xi, lam)`` and ``(-xi, 1/lam)``
give the same map; the canonical representative has ``lam >= 1``, and
``xi = e_n`` when ``lam = 1``.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import special_ortho_group

from .domain import chart_to_sphere, sphere_to_chart
from .errors import FitFailed, PoleSingular
from .maps import SmoothMap, SphereMap

__all__ = [
    "MoebiusTransform",
    "MoebiusAlgebraField",
    "stereographic",
    "inverse_stereographic",
    "compose",
    "inverse",
    "moebius_from_map",
    "algebra_field",
    "algebra_basis",
    "sample_random",
]


def stereographic(xi, x):
    """Stereographic projection of ``x`` from the pole ``-xi`` into ``R^{n-1}``.

    Coordinates are taken in :func:`~confdeficit.domain.complement_basis` of
    ``xi``. Raises :class:`PoleSingular` within ``1e-8`` of ``-xi``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.asarray(xi, dtype=float)
    if np.any(np.linalg.norm(x + xi, axis=1) < 1e-8):
        raise PoleSingular("point at the projection pole -xi")
    return sphere_to_chart(x, xi)


def inverse_stereographic(xi, y):
    """Inverse of :func:`stereographic`."""
    return chart_to_sphere(y, np.asarray(xi, dtype=float))


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


class MoebiusTransform:
    """The conformal map ``x -> O phi_{xi, lam}(x)``.

    Parameters
    ----------
    O : ndarray, shape (n, n)
        Orthogonal matrix; ``det O`` fixes the orientation.
    xi : ndarray, shape (n,)
        Unit vector (normalized on input).
    lam : float
        Positive dilation factor.
    """

    exact_jacobian = True

    def __init__(self, O, xi, lam):
        O = np.array(O, dtype=float)
        xi = _unit(xi)
        lam = float(lam)
        if not lam > 0.0:
            raise ValueError("lam must be positive")
        if O.shape != (xi.size, xi.size):
            raise ValueError("O and xi have inconsistent dimensions")
        if np.abs(O.T @ O - np.eye(xi.size)).max() > 1e-8:
            raise ValueError("O is not orthogonal")
        O.setflags(write=False)
        xi.setflags(write=False)
        self.O, self.xi, self.lam = O, xi, lam
        self.label = "moebius"

    # ----- constructors --------------------------------------------------
    @classmethod
    def identity(cls, n):
        en = np.zeros(n)
        en[-1] = 1.0
        return cls(np.eye(n), en, 1.0)

    @classmethod
    def from_boost(cls, boost, O=None):
        """Build ``O phi_{xi, lam}`` from the boost vector ``log(lam) xi``."""
        b = np.asarray(boost, dtype=float)
        n = b.size
        O = np.eye(n) if O is None else O
        t = float(np.linalg.norm(b))
        if t < 1e-300:
            en = np.zeros(n)
            en[-1] = 1.0
            return cls(O, en, 1.0)
        return cls(O, b / t, np.exp(t))

    # ----- properties ----------------------------------------------------
    @property
    def n(self):
        return self.xi.size

    @property
    def orientation(self):
        """``+1`` for orientation preserving maps, ``-1`` otherwise."""
        return 1 if np.linalg.det(self.O) > 0 else -1

    @property
    def boost(self):
        return np.log(self.lam) * self.xi

    def canonical(self):
        """Equivalent representative with ``lam >= 1`` (``xi = e_n`` if ``lam = 1``)."""
        xi, lam = np.array(self.xi), self.lam
        if abs(np.log(lam)) < 1e-14:
            xi = np.zeros(self.n)
            xi[-1] = 1.0
            lam = 1.0
        elif lam < 1.0:
            xi, lam = -xi, 1.0 / lam
        return MoebiusTransform(self.O, xi, lam)

    # ----- action --------------------------------------------------------
    def _parts(self, x):
        xi, lam = self.xi, self.lam
        a = x @ xi
        num = ((-(lam**2) * (1.0 - a) - 2.0 * lam * a + (1.0 + a))[:, None] * xi
               + 2.0 * lam * x)
        den = lam**2 * (1.0 - a) + (1.0 + a)
        return a, num, den

    def __call__(self, x):
        """Apply the map; outputs are renormalized to unit length."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _, num, den = self._parts(x)
        y = num / den[:, None]
        y /= np.linalg.norm(y, axis=1, keepdims=True)
        return y @ self.O.T

    apply = __call__

    def jacobian(self, x):
        """Ambient derivative of the closed-form expression, shape (P, n, n)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi, lam, n = self.xi, self.lam, self.n
        _, num, den = self._parts(x)
        pxi = np.outer(xi, xi)
        dnum = (lam**2 + 1.0) * pxi + 2.0 * lam * (np.eye(n) - pxi)
        dden = (1.0 - lam**2) * xi
        jac = dnum[None] / den[:, None, None] - num[:, :, None] * dden[None, None, :] / (den**2)[:, None, None]
        return np.matmul(self.O, jac)

    def conformal_factor(self, x):
        """Stretch factor ``|D phi(x) v|`` for unit tangent ``v``; equals
        ``1 / (alpha + <beta, x>)`` with ``alpha = (1 + lam^2) / (2 lam)`` and
        ``beta = (1 - lam^2) / (2 lam) xi``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lam = self.lam
        return 1.0 / ((1.0 + lam**2) / (2.0 * lam) + (1.0 - lam**2) / (2.0 * lam) * (x @ self.xi))

    def as_smooth(self):
        return SmoothMap(self.__call__, self.jacobian, "moebius")

    def inverse(self):
        return inverse(self)

    def __matmul__(self, other):
        return compose(self, other)

    def action_distance(self, other, points):
        """Largest distance between the actions of two maps on ``points``."""
        return float(np.abs(self(points) - other(points)).max())

    def to_dict(self):
        return {"O": self.O.tolist(), "xi": self.xi.tolist(), "lambda": self.lam}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["O"]), np.asarray(data["xi"]), float(data["lambda"]))

    def __repr__(self):
        return (f"MoebiusTransform(n={self.n}, orientation={self.orientation:+d}, "
                f"xi={np.round(self.xi, 6).tolist()}, lam={self.lam:.6g})")


def _probe_points(n, count=None):
    rng = np.random.default_rng(20240611)
    count = count or n * (n + 1) // 2 + n
    p = rng.standard_normal((count, n))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def moebius_from_map(F, n, tol=1e-8, points=None):
    """Recover ``(O, xi, lam)`` of a conformal map given in closed form.

    The reciprocal conformal factor of ``O phi_{xi, lam}`` is affine,
    ``alpha + <beta, x>``; a least-squares fit of it at probe points gives
    ``lam = alpha + |beta|`` and ``xi = -beta / |beta|``. The orthogonal
    factor is the orthogonal Procrustes solution matching
    ``phi_{xi, lam}(x_k)`` to ``F(x_k)``.

    Parameters
    ----------
    F : SmoothMap or MoebiusTransform
        Anything with ``__call__`` and ``jacobian``.
    n : int
    tol : float
        Largest admissible mismatch of the recovered map at the probes.

    Raises
    ------
    FitFailed
        If ``F`` is not a Moebius map to within ``tol``.
    """
    x = _probe_points(n) if points is None else points
    from .domain import tangent_frames

    tau = tangent_frames(x)[:, :, 0]
    jac = F.jacobian(x)
    c = np.linalg.norm(np.einsum("pij,pj->pi", jac, tau), axis=1)
    design = np.concatenate([np.ones((x.shape[0], 1)), x], axis=1)
    coef, *_ = np.linalg.lstsq(design, 1.0 / c, rcond=None)
    alpha, beta = coef[0], coef[1:]
    nb = float(np.linalg.norm(beta))
    if nb < 1e-12:
        phi = MoebiusTransform.identity(n)
    else:
        phi = MoebiusTransform(np.eye(n), -beta / nb, alpha + nb)
    src, dst = phi(x), F(x)
    uu, _, vt = np.linalg.svd(dst.T @ src)
    O = uu @ vt
    out = MoebiusTransform(O, phi.xi, phi.lam).canonical()
    err = float(np.abs(out(x) - dst).max())
    if not np.isfinite(err) or err > tol:
        raise FitFailed(f"map is not Moebius to tolerance {tol:g} (mismatch {err:.3g})")
    return out


def compose(phi, psi):
    """The Moebius map ``phi o psi`` in canonical form."""
    n = phi.n
    F = SmoothMap(lambda x: phi(psi(x)),
                  lambda x: np.einsum("pij,pjk->pik", phi.jacobian(psi(x)), psi.jacobian(x)))
    return moebius_from_map(F, n)


def inverse(phi):
    """Closed-form inverse, ``(O phi_{xi, lam})^{-1} = O^T phi_{O xi, 1/lam}``."""
    O = phi.O
    return MoebiusTransform(O.T, O @ phi.xi, 1.0 / phi.lam).canonical()


class MoebiusAlgebraField:
    """Infinitesimal conformal field ``X(x) = S x + mu (<x, xi> x - xi)``.

    ``S`` is skew-symmetric (an infinitesimal rotation) and the second term
    is the tangential projection of ``-mu xi``, the generator of the dilations
    ``phi_{xi, e^t}`` at ``t = 0`` when ``mu = 1``.
    """

    def __init__(self, S, xi, mu):
        self.S = np.asarray(S, dtype=float)
        self.xi = np.asarray(xi, dtype=float)
        self.mu = float(mu)
        if np.abs(self.S + self.S.T).max() > 1e-12:
            raise ValueError("S must be skew-symmetric")

    def __call__(self, x):
        x = np.atleast_2d(x)
        a = x @ self.xi
        return x @ self.S.T + self.mu * (a[:, None] * x - self.xi)

    def jacobian(self, x):
        x = np.atleast_2d(x)
        n = x.shape[1]
        a = x @ self.xi
        return (self.S[None] + self.mu * (x[:, :, None] * self.xi[None, None, :]
                                          + a[:, None, None] * np.eye(n)[None]))

    def as_smooth(self):
        return SmoothMap(self.__call__, self.jacobian, "conformal-field")


def algebra_field(X, domain):
    """Sample a :class:`MoebiusAlgebraField` on a domain."""
    return SphereMap.from_smooth(domain, X.as_smooth())


def algebra_basis(n):
    """Basis of the conformal algebra: ``n(n-1)/2`` rotations, ``n`` dilations."""
    out = []
    zero = np.zeros(n)
    for i in range(n):
        for j in range(i + 1, n):
            S = np.zeros((n, n))
            S[i, j], S[j, i] = 1.0, -1.0
            out.append(MoebiusAlgebraField(S, zero, 0.0))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        out.append(MoebiusAlgebraField(np.zeros((n, n)), e, 1.0))
    return out


def sample_random(n, rng=None, lam_range=(0.5, 2.0), orientation="preserving"):
    """Random Moebius map with ``lam`` log-uniform in ``lam_range``.

    Parameters
    ----------
    orientation : {"preserving", "reversing", "any"}
    """
    rng = np.random.default_rng(rng)
    O = special_ortho_group.rvs(n, random_state=rng)
    flip = orientation == "reversing" or (orientation == "any" and rng.random() < 0.5)
    if flip:
        O = O @ np.diag([1.0] * (n - 1) + [-1.0])
    xi = _unit(rng.standard_normal(n))
    lo, hi = lam_range
    lam = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    return MoebiusTransform(O, xi, lam)


