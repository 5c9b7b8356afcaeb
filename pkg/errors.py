"""
Exception hierarchy.

ConfigError maps to exit code 2, every NumericalError to exit code 3.
"""


class CoulombGapError(Exception):
    """Base class for all errors raised by this package"""
    pass


class ConfigError(CoulombGapError):
    """Malformed run configuration or command-line usage"""
    pass


class CacheError(CoulombGapError):
    """Unreadable or inconsistent cache entry"""
    pass


class NumericalError(CoulombGapError):
    """A numerical procedure could not deliver its contract"""
    pass


class DomainError(NumericalError):
    """Argument outside the domain of an operation"""
    pass


class NoGap(NumericalError):
    """Mass function is monotone, the droplet has no bounded gap"""
    pass


class NonPositiveLaplacian(NumericalError):
    """Laplacian of Q is not positive at a boundary radius"""
    pass


class MultiGapUnsupported(NumericalError):
    """Droplet has more than one bounded gap"""
    pass


class FrostmanViolation(NumericalError):
    """Q drops below the obstacle function off the droplet"""
    pass


class QuadratureFailure(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance"""
    pass


class RootNotFound(NumericalError):
    """No sign change in the search bracket"""
    pass


class ConvergenceFailure(NumericalError):
    """Series truncation length exceeded its cap"""
    pass


class PoleError(NumericalError):
    """Evaluation at (numerically) a zero of the theta function"""
    pass


class OutOfWindow(NumericalError):
    """Point lies outside the neighbourhood of the gap"""
    pass


class Divergence(NumericalError):
    """Szego kernel series diverges at the given points"""
    pass


class AngleCoincidence(NumericalError):
    """Equal angles on the circle branch of the Szego kernel"""
    pass


class ModeMismatch(NumericalError):
    """Points do not match the geometry of the requested mode"""
    pass


class TableBuildFailure(NumericalError):
    """Inverse-CDF table could not be constructed"""
    pass


EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def exit_code_for(error: Exception) -> int:
    """Exit code associated with an exception"""
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL
