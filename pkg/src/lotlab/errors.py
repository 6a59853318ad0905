"""Exception types raised across the package."""


class LotError(Exception):
    """Base class for all package errors."""


class ZeroTotalMass(LotError, ValueError):
    pass


class EmptySupport(LotError, ValueError):
    pass


class DimensionMismatch(LotError, ValueError):
    pass


class SolverFailure(LotError, RuntimeError):
    pass


class ZeroRow(LotError, ValueError):
    pass


class SingularCovariance(LotError, ValueError):
    pass


class SingularMatrix(LotError, ValueError):
    pass


class NonOrthogonalBasis(LotError, ValueError):
    pass


class ReferenceMismatch(LotError, ValueError):
    pass


class InfeasibleBound(LotError, ValueError):
    pass


class SingleClass(LotError, ValueError):
    pass


class DegenerateFeatures(LotError, ValueError):
    pass


class WidthMismatch(LotError, ValueError):
    pass


class InsufficientData(LotError, ValueError):
    pass


class BadMagic(LotError, ValueError):
    pass


class TruncatedFile(LotError, ValueError):
    pass


class CountMismatch(LotError, ValueError):
    pass


class ConfigError(LotError, ValueError):
    pass
