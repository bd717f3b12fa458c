"""Exception hierarchy shared by all modules."""


class VesselStateError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VesselStateError, ValueError):
    """Invalid scenario or configuration input."""


class NumericalError(VesselStateError, ArithmeticError):
    """Base class for numerical failures (CLI exit code 3)."""


class SingularityError(NumericalError):
    """Euler-angle rate transform evaluated too close to pitch = +-pi/2."""


class NonInvertibleMassError(NumericalError):
    """Assembled mass matrix is singular, indefinite or badly conditioned."""


class CovarianceNotPDError(NumericalError):
    """A covariance could not be factorized even after jitter."""


class ZeroEnergyError(NumericalError):
    """Zero-lag correlation of an innovation sequence is zero."""


class DomainError(VesselStateError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DimensionMismatchError(VesselStateError, ValueError):
    pass


class LengthMismatchError(VesselStateError, ValueError):
    pass


class MismatchedBankSizesError(VesselStateError, ValueError):
    pass


class EmptyInputError(VesselStateError, ValueError):
    pass


class InsufficientDataError(VesselStateError, ValueError):
    pass
