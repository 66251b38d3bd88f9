"""Exception hierarchy shared by all modules."""


class ImplosionError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ImplosionError, ValueError):
    """A (gamma, n) pair or a numeric argument violates a hard constraint."""

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class SingularBandError(ValidationError):
    """gamma sits exactly on a band endpoint where a denominator vanishes."""


class ResonanceError(ImplosionError):
    """The order-M coefficient matrix is (numerically) singular.

    This happens at gamma = 4/3 + 1/(2M).
    """

    def __init__(self, message, order, gamma_resonant):
        super().__init__(message)
        self.order = order
        self.gamma_resonant = gamma_resonant


class SeriesDomainError(ImplosionError, ValueError):
    """Series evaluation requested outside the estimated radius."""


class OrderTooLowError(ImplosionError):
    """No usable hand-off point exists for the requested series tolerance."""


class SonicProximityError(ImplosionError, ArithmeticError):
    """The sonic denominator G is indistinguishable from zero."""


class ProfileRangeError(ImplosionError, ValueError):
    """A similarity coordinate lies outside the computed profile."""
