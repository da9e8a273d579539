"""Exception hierarchy shared by all tspec modules."""


class TspecError(Exception):
    """Base class for every error raised by the library."""


# core
class ZeroStiffness(TspecError, ValueError):
    pass


class DegenerateBoundary(TspecError, ValueError):
    pass


class GridTooCoarse(TspecError, ValueError):
    pass


class SingularCorrection(TspecError, ArithmeticError):
    pass


# shooting
class NonlocalPerturbation(TspecError, ValueError):
    pass


class WindowEmpty(TspecError, ValueError):
    pass


class BoundaryTooCloseToZero(TspecError, ArithmeticError):
    pass


class PhaseInconsistent(TspecError, ArithmeticError):
    pass


class NoConvergence(TspecError, ArithmeticError):
    pass


class DegenerateNullspace(TspecError, ArithmeticError):
    pass


# discrete
class TooCoarse(TspecError, ValueError):
    pass


class EliminationSingular(TspecError, ArithmeticError):
    pass


class NearSingular(TspecError, ArithmeticError):
    """The shifted operator is numerically singular.

    ``distance`` carries the estimated distance from the spectral
    parameter to the discrete spectrum.
    """

    def __init__(self, message, distance=None):
        super().__init__(message)
        self.distance = distance


class UnsupportedOrder(TspecError, ValueError):
    pass


# analysis
class TooFewEigenvalues(TspecError, ValueError):
    pass


class SpectrumTooShort(TspecError, ValueError):
    pass


# abel
class CircleHitsSpectrum(TspecError, ArithmeticError):
    pass


class QuadratureNotConverged(TspecError, ArithmeticError):
    pass


# verify
class NotInDomain(TspecError, ValueError):
    pass


class ZeroInSpectrum(TspecError, ArithmeticError):
    pass


class PreconditionViolated(TspecError, ValueError):
    pass


class ConfigError(TspecError, ValueError):
    pass


class AmbiguousMember(UserWarning):
    """An eigenvalue sits on the imaginary axis where the two branches meet."""


class SpectrumWarning(UserWarning):
    """A real-axis scan was run on a problem whose spectrum may be non-real."""
