"""Exception hierarchy.

Every error raised by the package derives from :class:`AdiabaticError`, split
into configuration/input problems and numerical failures so that callers (the
CLI in particular) can map them onto distinct exit statuses.
"""


class AdiabaticError(Exception):
    """Base class for all package errors."""


class InputError(AdiabaticError, ValueError):
    """Invalid input data (shapes, states, parameters)."""


class NumericalError(AdiabaticError, ArithmeticError):
    """A numerical procedure failed or its assumptions were violated."""


# linalg
class NonConvergence(NumericalError):
    pass


class NotHermitian(InputError):
    pass


class NegativeSpectrum(InputError):
    pass


# superop
class DimensionMismatch(InputError):
    pass


class NotAState(InputError):
    pass


class NonHermitianHamiltonian(InputError):
    pass


# spectral
class Defective(NumericalError):
    """Eigenvector matrix too ill-conditioned: a non-trivial Jordan block."""


class NoZeroEigenvalue(NumericalError):
    pass


class CrossingDetected(NumericalError):
    def __init__(self, message, time=None, labels=None, gap=None):
        super().__init__(message)
        self.time = time
        self.labels = labels
        self.gap = gap


class AmbiguousMatching(NumericalError):
    pass


class StepTooLarge(NumericalError):
    pass


# adiabatic
class GapTooSmall(NumericalError):
    pass


class InitialStateNotTwoBlock(InputError):
    pass


# dynamics
class StepUnderflow(NumericalError):
    pass


class InvalidInitialState(InputError):
    pass


# cli
class ConfigError(InputError):
    pass
