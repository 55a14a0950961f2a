"""Conformal energy deficit of maps between spheres.

The deficit compares the conformally invariant ``(n-1)``-Dirichlet energy of
a map ``u : S^{n-1} -> R^n`` with the volume it encloses. It vanishes exactly
on Moebius transformations up to scaling and translation. The package
provides discretized spheres, the functionals and their first and second
variations, the Moebius group, fits and normalizations, and a command-line
tool.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402
from .domain import ChartGrid, TriangleMesh, build_chart_grid, build_icosphere, fint  # noqa: E402
from .errors import DomainError  # noqa: E402
from .fitting import (bubble_normalize, deficit_flow, fit_moebius, lambda_scale,  # noqa: E402
                      normalize_projection, rotation_distance)
from .functionals import (deficit, degree_sphere_valued, dirichlet_energy, el_residual,  # noqa: E402
                          local_degree_field, volume)
from .maps import SmoothMap, SphereMap, identity, power_map  # noqa: E402
from .moebius import MoebiusTransform, moebius_from_map  # noqa: E402
from .quadratics import coercivity_spectrum, project_kernel, q_n, q_tilde, volume_expansion  # noqa: E402

__all__ = [
    "__version__", "BACKEND",
    "TriangleMesh", "ChartGrid", "build_icosphere", "build_chart_grid", "fint",
    "DomainError",
    "SmoothMap", "SphereMap", "identity", "power_map",
    "MoebiusTransform", "moebius_from_map",
    "dirichlet_energy", "volume", "deficit", "degree_sphere_valued", "local_degree_field", "el_residual",
    "q_n", "q_tilde", "volume_expansion", "project_kernel", "coercivity_spectrum",
    "fit_moebius", "normalize_projection", "lambda_scale", "bubble_normalize", "rotation_distance",
    "deficit_flow",
]
