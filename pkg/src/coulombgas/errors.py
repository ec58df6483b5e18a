"""Exception hierarchy shared by all modules."""


class CoulombGasError(Exception):
    """Base class for every error raised by the package."""


class DomainError(CoulombGasError, ValueError):
    """An argument lies outside the admissible range of a function."""


class SingularError(CoulombGasError, ArithmeticError):
    """A quantity that must be strictly positive (typically Delta Q) is not."""


class PoleError(CoulombGasError, ArithmeticError):
    """A factor of a q-Pochhammer product is non-positive."""


class EmptyPeakError(CoulombGasError):
    """No local peak point exists for the requested mass level."""


class ResolutionError(CoulombGasError):
    """Two branching values could not be separated on the tau grid."""


class DegenerateError(CoulombGasError):
    """A detected droplet component is too thin to be trusted."""


class TrackingError(CoulombGasError):
    """Newton tracking of a peak left the basin of its component."""


class QuadratureError(CoulombGasError):
    """Quadrature failed to converge or left significant mass outside its windows."""


class IdentityViolation(CoulombGasError):
    """An internal consistency identity was violated beyond tolerance."""


class MultiPeakError(CoulombGasError):
    """The Laplace approximation was requested where two peaks are significant."""


class GeometryError(CoulombGasError):
    """The droplet geometry does not match the requested pipeline."""


class DivergenceError(CoulombGasError):
    """A requested functional diverges for this geometry."""
