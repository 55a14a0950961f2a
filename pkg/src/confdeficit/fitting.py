"""Optimization and normalization procedures built on the deficit.

* :func:`fit_moebius` finds the Moebius map closest to a given map in the
  conformally invariant ``(n-1)``-energy sense, after dividing by the scale
  ``|V(u)|^{1/n}``.
* :func:`normalize_projection` precomposes a near-identity map with a
  Moebius map so that its projection onto the infinitesimal Moebius fields
  vanishes, and splits it as ``lambda (id + w)`` plus a translation.
* :func:`bubble_normalize` rescales a possibly concentrated map in a
  stereographic chart so that no unit ball carries more than a fixed fraction
  of the energy while the unit ball at the origin carries exactly that
  fraction.
* :func:`deficit_flow` runs a monotone preconditioned descent of the discrete
  deficit on nodal values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize
from scipy.sparse.linalg import splu

from . import _kernels
from ._kernels import ball_sums
from .domain import chart_to_sphere, sphere_to_chart
from .errors import DegenerateEnergy, OutsideBasin, StepCollapse, VolumeTooSmall
from .functionals import (VOLUME_FLOOR, deficit, dirichlet_energy, el_residual,
                          energy_density, energy_gradient, volume)
from .maps import SmoothMap, SphereMap
from .moebius import MoebiusTransform, moebius_from_map
from .quadratics import kernel_basis

__all__ = [
    "FitResult",
    "fit_moebius",
    "NormalizationResult",
    "normalize_projection",
    "lambda_scale",
    "BubbleResult",
    "bubble_normalize",
    "covering",
    "chart_affine_moebius",
    "rotation_distance",
    "FlowResult",
    "deficit_flow",
]


def _skew(params, n):
    S = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    S[iu] = params
    return S - S.T


# ----------------------------------------------------------------------------
# best Moebius fit


@dataclass
class FitResult:
    """Outcome of :func:`fit_moebius`.

    Attributes
    ----------
    transform : MoebiusTransform
        Best map found, in canonical form.
    scale : float
        ``|V(u)|^{1/n}``.
    distance : float
        ``fint |grad u / scale - grad phi|^{n-1}``.
    deficit : float
        Deficit of ``u``.
    ratio : float
        ``distance / deficit``; ``nan`` when the deficit is below ``1e-14``
        and the ratio is not resolved.
    iterations : int
        Optimizer iterations of the winning start.
    start_index : int
        Index of the winning start (0 is the identity).
    converged : bool
        Whether the winning start met the gradient tolerance.
    """

    transform: MoebiusTransform
    scale: float
    distance: float
    deficit: float
    ratio: float
    iterations: int
    start_index: int
    converged: bool

    def to_dict(self):
        return {"transform": self.transform.to_dict(), "scale": self.scale,
                "distance": self.distance, "deficit": self.deficit, "ratio": self.ratio,
                "iterations": self.iterations, "start_index": self.start_index,
                "converged": self.converged}


class _FitProblem:
    """Normalized target gradient and the fit objective.

    The tangential gradient of ``phi_b`` is never stored: the kernels fuse
    it with the Procrustes cross matrix and with the misfit, one pass over
    the quadrature points each.
    """

    def __init__(self, u, volume_floor):
        dom = u.domain
        self.n = dom.n
        self.dom = dom
        v = volume(u)
        if abs(v) <= volume_floor:
            raise VolumeTooSmall(f"|V(u)| = {abs(v):.3g} is not above {volume_floor:g}")
        self.scale = abs(v) ** (1.0 / self.n)
        self.target = np.ascontiguousarray(u.gradient / self.scale)
        self.w = np.ascontiguousarray(dom.weights)
        self.x = np.ascontiguousarray(dom.points)
        self.frames = np.ascontiguousarray(dom.frames)
        self.wtarget = np.ascontiguousarray(self.w[:, None, None] * self.target)
        self.power = (self.n - 1) / 2.0

    @staticmethod
    def _boost(b):
        phi = MoebiusTransform.from_boost(b)
        return phi.xi, phi.lam

    def best_rotation(self, b):
        xi, lam = self._boost(b)
        U, _, Vt = np.linalg.svd(_kernels.moebius_fit_cross(self.x, self.frames, self.wtarget, xi, lam))
        return U @ Vt

    def misfit(self, O, b):
        xi, lam = self._boost(b)
        return _kernels.moebius_fit_misfit(self.x, self.frames, self.target, self.w, xi, lam, O, self.power)

    def reduced(self, b):
        return self.misfit(self.best_rotation(b), b)

    def moment_start(self):
        """Boost from an affine fit of the reciprocal stretch factor."""
        c = np.sqrt(np.einsum("qij,qij->q", self.target, self.target) / (self.n - 1))
        design = np.concatenate([np.ones((self.x.shape[0], 1)), self.x], axis=1)
        sw = np.sqrt(self.w)
        coef, *_ = np.linalg.lstsq(design * sw[:, None], sw / np.maximum(c, 1e-12), rcond=None)
        alpha, beta = coef[0], coef[1:]
        nb = np.linalg.norm(beta)
        lam = alpha + nb
        if nb < 1e-12 or not np.isfinite(lam) or lam <= 1.0:
            return np.zeros(self.n)
        return np.log(lam) * (-beta / nb)


def fit_moebius(u, n_starts=8, seed=0, grad_tol=1e-8, max_iter=200, volume_floor=VOLUME_FLOOR,
                lam_spread=3.0):
    """Best Moebius approximation of ``u`` up to scaling and translation.

    Minimizes ``F(phi) = fint |grad u / |V(u)|^{1/n} - grad phi|^{n-1}`` over
    both components of the Moebius group.

    Parameters
    ----------
    u : SphereMap
    n_starts : int
        Number of starting points: the identity, an estimate from the
        stretch factor of ``u``, then random boosts.
    seed : int
        Seed for the random starts.
    grad_tol : float
        Gradient tolerance of the BFGS iterations.
    lam_spread : float
        Random starts draw ``lam`` with ``|log lam| <= log(lam_spread)``.

    Returns
    -------
    FitResult

    Notes
    -----
    The map is ``O phi_b`` with boost ``b = log(lam) xi``. For ``n = 3`` the
    objective is quadratic in ``O`` and the orthogonal factor is eliminated
    exactly by an orthogonal Procrustes step over all of ``O(3)``; only ``b``
    is optimized. For ``n > 3`` the reduced problem provides the starting
    rotation, and ``(O, b)`` is then refined jointly with
    ``O = O_0 exp(K)``. Gradients are central differences with relative
    step ``1e-5``.
    """
    prob = _FitProblem(u, volume_floor)
    n = prob.n
    rng = np.random.default_rng(seed)
    starts = [np.zeros(n), prob.moment_start()]
    while len(starts) < n_starts:
        d = rng.standard_normal(n)
        starts.append(rng.uniform(0.0, np.log(lam_spread)) * d / np.linalg.norm(d))
    starts = starts[:max(n_starts, 1)]
    opts = {"gtol": grad_tol, "maxiter": max_iter, "finite_diff_rel_step": 1e-5}
    best = None
    for idx, b0 in enumerate(starts):
        res = minimize(prob.reduced, b0, method="BFGS", jac="3-point", options=opts)
        b = res.x
        O = prob.best_rotation(b)
        val = prob.misfit(O, b)
        gnorm = float(np.linalg.norm(res.jac))
        iters = int(res.nit)
        if n > 3:
            nk = n * (n - 1) // 2

            def full(theta, O0=O):
                return prob.misfit(O0 @ expm(_skew(theta[:nk], n)), theta[nk:])

            res2 = minimize(full, np.concatenate([np.zeros(nk), b]), method="BFGS", jac="3-point",
                            options=opts)
            if res2.fun <= val:
                O = O @ expm(_skew(res2.x[:nk], n))
                b = res2.x[nk:]
                val = float(res2.fun)
                gnorm = float(np.linalg.norm(res2.jac))
                iters += int(res2.nit)
        cand = (val, idx, b, O, gnorm <= 10.0 * grad_tol or res.success, iters)
        if best is None or val < best[0] - 1e-15:
            best = cand
    val, idx, b, O, conv, iters = best
    phi = MoebiusTransform.from_boost(b, O).canonical()
    e = deficit(u, volume_floor).deficit
    ratio = val / e if e > 1e-14 else np.nan
    return FitResult(phi, prob.scale, val, e, ratio, iters, idx, bool(conv))


# ----------------------------------------------------------------------------
# normalization by projection onto the kernel


@dataclass
class NormalizationResult:
    """Outcome of :func:`normalize_projection`.

    ``u o psi = mean + lam (x + w)`` after the initial rescaling, with
    ``fint w = 0``, ``fint <w, x> = 0`` and vanishing kernel projection.
    """

    psi: MoebiusTransform
    lam: float
    w: SphereMap
    projection_residual: float
    iterations: int
    shift: list = field(default_factory=list)
    scale: float = 1.0


def lambda_scale(u, psi):
    """``fint <u o psi, x>``."""
    v = u.precompose(psi)
    return float(u.domain.integrate(np.einsum("qi,qi->q", v.qvalues, u.domain.points)))


def _group_element(theta, n):
    nk = n * (n - 1) // 2
    return MoebiusTransform.from_boost(theta[nk:], expm(_skew(theta[:nk], n)))


def normalize_projection(u, tol=1e-10, max_iter=50, fd_step=1e-7, volume_floor=VOLUME_FLOOR):
    """Find ``psi`` with ``Pi(u o psi - mean) = 0`` by Newton's method.

    The map is first recentred and rescaled to ``(u - fint u) / V(u)^{1/n}``.
    The unknowns are the ``n(n+1)/2`` parameters of an orientation preserving
    ``psi = exp(K) phi_b``; the equations are the ``W^{1,2}`` inner products
    of ``u o psi`` with the orthonormal kernel fields. The Jacobian is a
    forward difference, and steps are halved until the residual decreases.

    Raises
    ------
    VolumeTooSmall
        If ``V(u)`` is not positive.
    OutsideBasin
        If Newton's method stalls or the boost leaves ``|log lam| <= 5``.
    """
    dom = u.domain
    n = dom.n
    v = volume(u)
    if v <= volume_floor:
        raise VolumeTooSmall(f"V(u) = {v:.3g} is not above {volume_floor:g}")
    shift = u.mean()
    scale = v ** (1.0 / n)
    u0 = (u - shift) / scale
    kb = kernel_basis(dom)

    def residual(theta):
        return kb.coefficients(u0.precompose(_group_element(theta, n)))

    theta = np.zeros(n * (n + 1) // 2)
    r = residual(theta)
    it = 0
    while np.linalg.norm(r) > tol:
        if it >= max_iter:
            raise OutsideBasin(f"no convergence after {max_iter} Newton steps (|r| = {np.linalg.norm(r):.3g})")
        J = np.empty((r.size, theta.size))
        for j in range(theta.size):
            e = np.zeros_like(theta)
            e[j] = fd_step
            J[:, j] = (residual(theta + e) - r) / fd_step
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise OutsideBasin("singular Newton system") from exc
        t = 1.0
        while True:
            cand = theta + t * step
            rc = residual(cand)
            if np.linalg.norm(rc) < np.linalg.norm(r):
                break
            t *= 0.5
            if t < 1e-6:
                raise OutsideBasin("Newton line search failed")
        theta, r = cand, rc
        if np.linalg.norm(theta[n * (n - 1) // 2:]) > 5.0:
            raise OutsideBasin("boost parameter diverged")
        it += 1
    psi = _group_element(theta, n)
    moved = u0.precompose(psi)
    moved = moved - moved.mean()
    lam = float(dom.integrate(np.einsum("qi,qi->q", moved.qvalues, dom.points)))
    w = moved / lam - SphereMap.from_smooth(dom, _identity_smooth(n))
    res = float(np.linalg.norm(kb.coefficients(w)))
    return NormalizationResult(psi.canonical(), lam, w, res, it, shift.tolist(), float(scale))


def _identity_smooth(n):
    from .maps import identity

    return identity(n)


# ----------------------------------------------------------------------------
# bubble normalization


def covering(n):
    """Covering of the chart ball ``B_2`` by unit balls for the bubble scan.

    Returns
    -------
    centers : ndarray, shape (k, n-1)
    rho0 : float
        Radius of the covered ball (2).
    r0 : float
        ``(rho0^2 - 1) / (rho0^2 + 1)``; caps ``{x_n > s}`` with
        ``s in [-r0, 0]`` correspond to chart balls of radius between 1 and
        ``rho0``.

    Notes
    -----
    For ``n = 3`` these are the hexagonal configuration of seven unit discs
    (the origin and six centres at distance ``sqrt 3``). In higher
    dimensions the unit balls circumscribe the cubes of side
    ``2 / sqrt(n - 1)`` that meet ``B_2``.
    """
    rho0 = 2.0
    d = n - 1
    if d == 2:
        ang = np.arange(6) * np.pi / 3.0
        centers = np.concatenate([[[0.0, 0.0]], np.sqrt(3.0) * np.stack([np.cos(ang), np.sin(ang)], 1)])
    else:
        s = 2.0 / np.sqrt(d)
        m = int(np.ceil(rho0 / s))
        ax = (np.arange(-m, m) + 0.5) * s
        cen = np.array(list(itertools.product(ax, repeat=d)))
        near = np.linalg.norm(np.maximum(np.abs(cen) - s / 2.0, 0.0), axis=1)
        centers = cen[near < rho0]
    r0 = (rho0**2 - 1.0) / (rho0**2 + 1.0)
    return centers, rho0, r0


def chart_affine_moebius(rho, q, n):
    """The Moebius map ``sigma^{-1} o (y -> rho y + q) o sigma``.

    ``sigma`` projects from ``-e_n`` with ``e_n`` sent to the origin.
    """
    en = np.zeros(n)
    en[-1] = 1.0
    basis = np.eye(n)[:, : n - 1]
    q = np.asarray(q, dtype=float)

    def func(x):
        y = sphere_to_chart(x, en, basis)
        return chart_to_sphere(rho * y + q, en, basis)

    def jac(x):
        a = 1.0 + x[:, -1]
        dsig = np.concatenate([np.broadcast_to(np.eye(n - 1), (x.shape[0], n - 1, n - 1)) / a[:, None, None],
                               (-x[:, : n - 1] / a[:, None] ** 2)[:, :, None]], axis=2)
        y = sphere_to_chart(x, en, basis)
        _, dinv = chart_to_sphere(rho * y + q, en, basis, jacobian=True)
        return rho * np.einsum("pij,pjk->pik", dinv, dsig)

    return moebius_from_map(SmoothMap(func, jac), n, tol=1e-7)


@dataclass
class BubbleResult:
    """Outcome of :func:`bubble_normalize`.

    Attributes
    ----------
    pole : str
        Chart used: projection from ``-e_n``, so ``e_n`` is the chart origin.
    center, radius : ndarray, float
        Affine chart map ``T(y) = radius * y + center``.
    k : int
        Number of unit balls covering the chart ball ``B_2``.
    fraction : float
        Energy share of the selected ball.
    transform : MoebiusTransform
        ``phi = sigma^{-1} o T o sigma``.
    normalized : SphereMap
        ``(u o phi - mean) / V(u)^{1/n}``.
    cap_levels, cap_fractions : list of float
        Probed ``s`` and the energy share of ``{x_n > s}`` for the normalized map.
    window : tuple of float
        ``(1/(k+1), k/(k+1))``.
    window_ok : bool
    rounds : int
        Number of scan-and-compose rounds.
    """

    pole: str
    center: np.ndarray
    radius: float
    k: int
    fraction: float
    transform: MoebiusTransform
    normalized: SphereMap
    cap_levels: list
    cap_fractions: list
    window: tuple
    window_ok: bool
    rounds: int

    def to_dict(self):
        return {"pole": self.pole, "center": np.asarray(self.center).tolist(), "radius": self.radius,
                "k": self.k, "fraction": self.fraction, "transform": self.transform.to_dict(),
                "cap_levels": self.cap_levels, "cap_fractions": self.cap_fractions,
                "window": list(self.window), "window_ok": self.window_ok, "rounds": self.rounds}


class _BallScan:
    """Maximal chart-ball energy at a given radius."""

    def __init__(self, u, n_candidates=256):
        dom = u.domain
        n = dom.n
        x = dom.points
        dens = energy_density(u.gradient)
        mass = dom.weights * dens
        self.total = float(mass.sum())
        keep = 1.0 + x[:, -1] > 1e-12
        en = np.zeros(n)
        en[-1] = 1.0
        self.ys = np.ascontiguousarray(sphere_to_chart(x[keep], en, np.eye(n)[:, : n - 1]))
        self.mass = np.ascontiguousarray(mass[keep])
        # chart-space energy density ranks the candidate centres
        rho = 2.0 / (1.0 + np.einsum("pi,pi->p", self.ys, self.ys))
        order = np.argsort(-dens[keep] * rho ** (n - 1), kind="stable")
        self.seeds = self.ys[order[:n_candidates]]
        self.d = n - 1

    def best(self, radius, hint=None):
        cands = self.seeds if hint is None else np.vstack([self.seeds, hint[None]])
        vals = ball_sums(self.ys, self.mass, cands, radius)
        i = int(np.argmax(vals))
        q, v = cands[i].copy(), vals[i]
        step = radius / 2.0
        dirs = np.vstack([np.eye(self.d), -np.eye(self.d)])
        while step > 1e-4 * radius:
            trial = q + step * dirs
            tv = ball_sums(self.ys, self.mass, trial, radius)
            j = int(np.argmax(tv))
            if tv[j] > v * (1.0 + 1e-12):
                q, v = trial[j], tv[j]
            else:
                step *= 0.5
        # prefer the centre closest to the origin among ties
        if np.linalg.norm(q) > 0 and ball_sums(self.ys, self.mass, np.zeros((1, self.d)), radius)[0] >= v * (1 - 1e-9):
            q = np.zeros(self.d)
        return q, v

    def radius_for(self, target, lo=1e-3, hi=1e3, iters=40):
        """Smallest radius whose best ball carries ``target`` energy."""
        q_lo, v_lo = self.best(lo)
        if v_lo >= target:
            return lo, q_lo
        hint = None
        for _ in range(iters):
            mid = np.sqrt(lo * hi)
            q_mid, v_mid = self.best(mid, hint)
            if v_mid >= target:
                hi, hint = mid, q_mid
            else:
                lo = mid
        return hi, self.best(hi, hint)[0]


def bubble_normalize(u, k=None, fraction=None, max_rounds=6, tol=1e-4, n_levels=5,
                     energy_floor=1e-8, window_tol=2e-3):
    """Chart normalization that centres and rescales the energy of ``u``.

    In the chart projecting from ``-e_n``, find the smallest radius ``rho``
    such that some ball ``B_rho(q)`` carries the share ``fraction`` of the
    ``(n-1)``-energy (default ``1/(k+1)``), choose the maximizing centre, and
    precompose ``u`` with ``phi = sigma^{-1} o T o sigma``,
    ``T(y) = rho y + q``. The scan is repeated on the composed map until
    ``T`` is the identity to within ``tol``, which resolves energy
    concentrated below the quadrature scale.

    Parameters
    ----------
    u : SphereMap
    k : int, optional
        Covering number; defaults to :func:`covering` (7 for ``n = 3``).
    fraction : float, optional
        Energy share of the selected ball, in ``(0, 1/2]``.
    n_levels : int
        Number of cap levels ``s`` probed in ``[-r0, 0]``.
    window_tol : float
        Slack in the cap-window check. The cap ``{x_n > 0}`` is the unit chart
        ball and carries exactly ``fraction`` in exact arithmetic, so with the
        default fraction it sits on the lower edge; the slack absorbs the
        quadrature error of the indicator sums.

    Raises
    ------
    VolumeTooSmall
        If ``V(u)`` is not positive.
    DegenerateEnergy
        If the energy is below ``energy_floor``.
    """
    dom = u.domain
    n = dom.n
    v = volume(u)
    if v <= VOLUME_FLOOR:
        raise VolumeTooSmall(f"V(u) = {v:.3g} is not above {VOLUME_FLOOR:g}")
    if dirichlet_energy(u) < energy_floor:
        raise DegenerateEnergy("energy below floor")
    centers, rho0, r0 = covering(n)
    if k is None:
        k = centers.shape[0]
    if fraction is None:
        fraction = 1.0 / (k + 1.0)
    if not 0.0 < fraction <= 0.5:
        raise ValueError("fraction must lie in (0, 1/2]")
    rho_tot, q_tot = 1.0, np.zeros(n - 1)
    current = u
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        scan = _BallScan(current)
        rho, q = scan.radius_for(fraction * scan.total)
        q_tot = q_tot + rho_tot * q
        rho_tot = rho_tot * rho
        phi = chart_affine_moebius(rho_tot, q_tot, n)
        current = u.precompose(phi)
        if abs(np.log(rho)) < tol and np.linalg.norm(q) < tol * max(rho, 1.0):
            break
    normalized = (current - current.mean()) / v ** (1.0 / n)
    dens = dom.weights * energy_density(normalized.gradient)
    total = dens.sum()
    levels = list(np.linspace(-r0, 0.0, n_levels))
    caps = [float(dens[dom.points[:, -1] > s].sum() / total) for s in levels]
    window = (1.0 / (k + 1.0), k / (k + 1.0))
    ok = all(window[0] - window_tol <= c <= window[1] + window_tol for c in caps)
    return BubbleResult("-e_n", q_tot, float(rho_tot), int(k), float(fraction), phi, normalized,
                        [float(s) for s in levels], caps, window, bool(ok), rounds)


def rotation_distance(u):
    """``W^{1,2}`` distance from ``u`` to the nearest rotation ``x -> R x``.

    ``R`` is the orthogonal Procrustes solution in ``SO(n)`` for the values.

    Returns
    -------
    distance : float
    R : ndarray, shape (n, n)
    """
    dom = u.domain
    x = dom.points
    C = np.einsum("q,qi,qj->ij", dom.weights, u.qvalues, x)
    U, _, Vt = np.linalg.svd(C)
    D = np.eye(dom.n)
    D[-1, -1] = np.sign(np.linalg.det(U @ Vt))
    R = U @ D @ Vt
    dv = u.qvalues - x @ R.T
    dg = u.gradient - np.einsum("ij,qjk->qik", R, dom.frames)
    dist = np.sqrt(dom.integrate(np.einsum("qi,qi->q", dv, dv)) + dom.integrate(np.einsum("qij,qij->q", dg, dg)))
    return float(dist), R


# ----------------------------------------------------------------------------
# deficit descent


@dataclass
class FlowResult:
    """Outcome of :func:`deficit_flow`.

    Attributes
    ----------
    reports : list of EnergyReport
        One per accepted iterate, starting with the initial map.
    final : SphereMap
    residual_norm : float or None
        Euler-Lagrange residual of the final map (``None`` if ``V <= 0``).
    steps : list of float
        Accepted step sizes.
    """

    reports: list
    final: SphereMap
    residual_norm: float | None
    steps: list

    @property
    def deficits(self):
        return [r.deficit for r in self.reports]


def deficit_flow(u0, steps=200, step=0.5, min_step=1e-12, growth=1.5, slack=0.0,
                 volume_floor=VOLUME_FLOOR, callback=None):
    """Monotone descent of the discrete deficit on nodal values.

    Each step moves along ``-K^{-1} grad E`` with ``K`` the nodal
    ``W^{1,2}`` Gram matrix, subtracts the mean, and halves the step until
    the deficit does not increase by more than ``slack``. Accepted steps are
    enlarged by ``growth``. ``callback(i, u, report)`` is called for the
    initial map (``i = 0``) and after every accepted step.

    Raises
    ------
    VolumeTooSmall
        If ``|V(u0)|`` is not above ``volume_floor``.
    StepCollapse
        If the step shrinks below ``min_step`` while the deficit still
        exceeds round-off level.
    """
    dom = u0.domain
    u = u0.to_nodal() if u0.is_smooth else u0
    if abs(volume(u)) <= volume_floor:
        raise VolumeTooSmall("initial volume below floor")
    lu = splu(dom.w12_matrix)
    rep, grad = energy_gradient(u, volume_floor)
    reports = [rep]
    taken = []
    if callback is not None:
        callback(0, u, rep)
    s = float(step)
    for _ in range(int(steps)):
        direction = -lu.solve(grad)
        while True:
            cand = SphereMap(dom, u.values + s * direction)
            cand = cand - cand.mean()
            try:
                new = deficit(cand, volume_floor)
                ok = (not new.volume_flag) and new.deficit <= rep.deficit + slack
            except FloatingPointError:  # pragma: no cover
                ok = False
            if ok:
                break
            s *= 0.5
            if s < min_step:
                if rep.deficit < 1e-10:
                    return FlowResult(reports, u, _final_residual(u), taken)
                raise StepCollapse(f"step below {min_step:g} at deficit {rep.deficit:.3g}")
        u = cand
        taken.append(s)
        rep, grad = energy_gradient(u, volume_floor)
        reports.append(rep)
        if callback is not None:
            callback(len(reports) - 1, u, rep)
        s *= growth
    return FlowResult(reports, u, _final_residual(u), taken)


def _final_residual(u):
    try:
        return el_residual(u).norm
    except VolumeTooSmall:
        return None
