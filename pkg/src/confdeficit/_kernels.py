"""Hot loops with a compiled implementation and a numpy fallback.

The compiled module ``_ckernels`` is used when it was built; otherwise the
numpy versions below are selected at import time. ``BACKEND`` records which
one is active and both are always reachable for testing and benchmarking.
"""

import numpy as np

__all__ = ["winding_numbers", "ball_sums", "moebius_fit_cross", "moebius_fit_misfit", "BACKEND",
           "winding_numbers_numpy", "ball_sums_numpy", "moebius_tangent_gradient",
           "moebius_fit_cross_numpy", "moebius_fit_misfit_numpy"]


def winding_numbers_numpy(tri, ys, chunk=64):
    """Winding number of the closed triangle surface ``tri`` around points.

    Parameters
    ----------
    tri : ndarray, shape (F, 3, 3)
        Outward oriented triangles.
    ys : ndarray, shape (P, 3)

    Returns
    -------
    ndarray, shape (P,)
        Sum of signed solid angles divided by ``4 pi``.
    """
    tri = np.asarray(tri, dtype=float)
    ys = np.asarray(ys, dtype=float)
    out = np.empty(ys.shape[0])
    for s in range(0, ys.shape[0], chunk):
        rel = tri[None, :, :, :] - ys[s:s + chunk, None, None, :]
        a, b, c = rel[:, :, 0], rel[:, :, 1], rel[:, :, 2]
        la, lb, lc = (np.linalg.norm(v, axis=-1) for v in (a, b, c))
        det = np.einsum("pfk,pfk->pf", a, np.cross(b, c))
        den = (la * lb * lc + np.einsum("pfk,pfk->pf", a, b) * lc
               + np.einsum("pfk,pfk->pf", a, c) * lb + np.einsum("pfk,pfk->pf", b, c) * la)
        out[s:s + chunk] = 2.0 * np.arctan2(det, den).sum(axis=1) / (4.0 * np.pi)
    return out


def ball_sums_numpy(pts, mass, centers, radius, chunk=64):
    """Total ``mass`` of points strictly inside each ball ``B(center, radius)``."""
    pts = np.asarray(pts, dtype=float)
    mass = np.asarray(mass, dtype=float)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    out = np.empty(centers.shape[0])
    r2 = radius * radius
    for s in range(0, centers.shape[0], chunk):
        c = centers[s:s + chunk]
        d2 = ((pts[None, :, :] - c[:, None, :]) ** 2).sum(axis=2)
        out[s:s + chunk] = (d2 < r2) @ mass
    return out


def moebius_tangent_gradient(x, frames, xi, lam):
    """Tangential gradient of ``phi_{xi, lam}`` at unit points ``x``.

    With ``F`` the tangent frames and ``g = F^T xi`` the gradient is
    ``(2 lam / den) F + c g^T``, where ``t = <x, xi>``,
    ``den = lam^2 (1 - t) + 1 + t`` and ``c`` collects the derivative of the
    denominator.

    Returns
    -------
    ndarray, shape (P, n, n-1)
    """
    t = x @ xi
    den = lam**2 * (1.0 - t) + (1.0 + t)
    num = (-(lam**2) * (1.0 - t) - 2.0 * lam * t + (1.0 + t))[:, None] * xi + 2.0 * lam * x
    c = ((lam - 1.0) ** 2 / den)[:, None] * xi - (1.0 - lam**2) * num / (den**2)[:, None]
    g = np.einsum("qik,i->qk", frames, xi)
    return (2.0 * lam / den)[:, None, None] * frames + c[:, :, None] * g[:, None, :]


def moebius_fit_cross_numpy(x, frames, wtarget, xi, lam):
    """Cross matrix ``sum_q wtarget_q M_q^T`` with ``M_q`` the tangential Moebius gradient."""
    M = moebius_tangent_gradient(x, frames, xi, lam)
    return np.tensordot(wtarget, M, axes=([0, 2], [0, 2]))


def moebius_fit_misfit_numpy(x, frames, target, w, xi, lam, O, power):
    """``sum_q w_q |target_q - O M_q|^(2 power)``."""
    M = moebius_tangent_gradient(x, frames, xi, lam)
    diff = target - np.matmul(O, M)
    sq = (diff * diff).sum(axis=(1, 2))
    return float(w @ (sq if power == 1.0 else sq**power))


try:
    from ._ckernels import ball_sums as _ball_sums_c
    from ._ckernels import moebius_fit_cross as _cross_c
    from ._ckernels import moebius_fit_misfit as _misfit_c
    from ._ckernels import winding_numbers as _winding_c

    BACKEND = "compiled"

    def winding_numbers(tri, ys):
        return _winding_c(np.ascontiguousarray(tri, dtype=float),
                          np.ascontiguousarray(np.atleast_2d(ys), dtype=float))

    def ball_sums(pts, mass, centers, radius):
        return _ball_sums_c(np.ascontiguousarray(pts, dtype=float),
                            np.ascontiguousarray(mass, dtype=float),
                            np.ascontiguousarray(np.atleast_2d(centers), dtype=float),
                            float(radius))

    def moebius_fit_cross(x, frames, wtarget, xi, lam):
        return _cross_c(x, frames, wtarget, np.ascontiguousarray(xi, dtype=float), float(lam))

    def moebius_fit_misfit(x, frames, target, w, xi, lam, O, power):
        return _misfit_c(x, frames, target, w, np.ascontiguousarray(xi, dtype=float), float(lam),
                         np.ascontiguousarray(O, dtype=float), float(power))

    winding_numbers.__doc__ = winding_numbers_numpy.__doc__
    moebius_fit_cross.__doc__ = moebius_fit_cross_numpy.__doc__
    moebius_fit_misfit.__doc__ = moebius_fit_misfit_numpy.__doc__
    ball_sums.__doc__ = ball_sums_numpy.__doc__
except ImportError:  # pragma: no cover - exercised when the extension is absent
    BACKEND = "numpy"
    winding_numbers = winding_numbers_numpy
    ball_sums = ball_sums_numpy
    moebius_fit_cross = moebius_fit_cross_numpy
    moebius_fit_misfit = moebius_fit_misfit_numpy
