"""Seeded families of test maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maps import SphereMap, identity, power_map, random_polynomial_field
from .moebius import MoebiusTransform, sample_random
from .quadratics import project_kernel, w12_inner

__all__ = [
    "CorpusItem",
    "moebius_perturbations",
    "harmonic_perturbations",
    "power_maps",
    "bubbles",
    "random_corpus",
    "orthogonal_fields",
    "FAMILIES",
]


@dataclass
class CorpusItem:
    """A labelled map with the parameters that produced it."""

    family: str
    label: str
    map: SphereMap
    params: dict


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def moebius_perturbations(domain, count=20, seed=0, amplitude=0.0, lam_range=(0.5, 2.0)):
    """Random Moebius maps, optionally plus a random cubic field of size ``amplitude``."""
    rng = _rng(seed)
    n = domain.n
    out = []
    for i in range(count):
        phi = sample_random(n, rng, lam_range=lam_range, orientation="any")
        f = phi.as_smooth()
        if amplitude:
            f = f + random_polynomial_field(n, 3, rng, scale=amplitude, mean_free=True)
        out.append(CorpusItem("moebius", f"moebius-{i}", SphereMap.from_smooth(domain, f),
                              {"transform": phi.to_dict(), "amplitude": amplitude}))
    return out


def harmonic_perturbations(domain, count=20, seed=0, amplitudes=(0.01, 0.1, 0.5), degree=3):
    """``id + a w`` with ``w`` a random mean-free polynomial field of unit scale."""
    rng = _rng(seed)
    n = domain.n
    out = []
    for i in range(count):
        a = float(amplitudes[i % len(amplitudes)])
        w = random_polynomial_field(n, degree, rng, scale=1.0, mean_free=True)
        out.append(CorpusItem("harmonic", f"harmonic-{i}", SphereMap.from_smooth(domain, identity(n) + a * w),
                              {"amplitude": a, "degree": degree}))
    return out


def power_maps(domain, degrees=(-2, -1, 1, 2, 3), nodal=False):
    """The maps ``z -> z^k`` of the 2-sphere."""
    if domain.n != 3:
        raise ValueError("power maps are defined for n = 3")
    out = []
    for k in degrees:
        u = SphereMap.from_smooth(domain, power_map(k))
        if nodal:
            u = u.to_nodal()
        out.append(CorpusItem("power", f"power{k:+d}", u, {"k": int(k)}))
    return out


def bubbles(domain, lams=(10.0, 100.0), seed=0):
    """``R o phi_{xi, lam}`` with random rotation ``R`` and pole ``xi``."""
    rng = _rng(seed)
    n = domain.n
    out = []
    for lam in lams:
        xi = rng.standard_normal(n)
        xi /= np.linalg.norm(xi)
        Q, R = np.linalg.qr(rng.standard_normal((n, n)))
        Q = Q * np.sign(np.diag(R))
        if np.linalg.det(Q) < 0:
            Q[:, 0] = -Q[:, 0]
        phi = MoebiusTransform(Q, xi, float(lam))
        out.append(CorpusItem("bubble", f"bubble-{lam:g}", SphereMap.from_smooth(domain, phi.as_smooth()),
                              {"transform": phi.to_dict(), "lam": float(lam)}))
    return out


def random_corpus(domain, size=200, seed=0):
    """Mixed corpus: Moebius maps with and without noise, and large perturbations of ``id``.

    The harmonic part includes amplitudes up to 2, so some maps have
    negative or tiny volume.
    """
    rng = _rng(seed)
    quarter = size // 4
    items = moebius_perturbations(domain, quarter, rng)
    items += moebius_perturbations(domain, quarter, rng, amplitude=0.2)
    items += harmonic_perturbations(domain, size - 2 * quarter, rng, amplitudes=(0.05, 0.3, 1.0, 2.0))
    return items


def orthogonal_fields(domain, count=10, seed=0, degree=3):
    """Random polynomial fields ``w`` in the normalized class.

    ``fint w = 0``, ``fint <w, x> = 0`` and the ``W^{1,2}`` projection onto
    the infinitesimal Moebius fields vanishes. On this class the quadratic
    form is the second variation of the deficit at the identity. Each field
    is normalized to unit ``W^{1,2}`` norm.
    """
    rng = _rng(seed)
    n = domain.n
    ident = SphereMap.from_smooth(domain, identity(n))
    out = []
    for _ in range(count):
        w = SphereMap.from_smooth(domain, random_polynomial_field(n, degree, rng, scale=1.0, mean_free=True))
        w = w - project_kernel(w).projection
        w = w - w.mean()
        w = w - domain.integrate(np.einsum("qi,qi->q", w.qvalues, domain.points)) * ident
        out.append(w / np.sqrt(w12_inner(w, w)))
    return out


FAMILIES = {
    "moebius": moebius_perturbations,
    "harmonic": harmonic_perturbations,
    "power": power_maps,
    "bubble": bubbles,
}
