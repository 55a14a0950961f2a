"""Exception hierarchy.

Every precondition or convergence failure raised by the library derives from
:class:`DomainError`; the CLI maps it to exit code 1.
"""


class DomainError(Exception):
    """Base class for mathematical precondition and convergence failures."""


class NotSphereValued(DomainError):
    """A map expected to take values on the unit sphere does not."""


class DegreeAmbiguous(DomainError):
    """A degree or winding computation is not close to an integer."""


class VolumeTooSmall(DomainError):
    """The enclosed volume is below the admissibility floor."""


class PoleSingular(DomainError):
    """A point lies at the projection pole of a stereographic chart."""


class FitFailed(DomainError):
    """A fit or parameter recovery did not reach its tolerance."""


class IllConditionedBasis(DomainError):
    """A basis Gram matrix is too ill-conditioned to orthonormalize."""


class EigenSolverStalled(DomainError):
    """An eigenvalue computation did not converge."""


class OutsideBasin(DomainError):
    """Newton iteration left its basin of convergence."""


class DegenerateEnergy(DomainError):
    """The Dirichlet energy is too small for a normalization to exist."""


class StepCollapse(DomainError):
    """Backtracking shrank the step below its floor."""
