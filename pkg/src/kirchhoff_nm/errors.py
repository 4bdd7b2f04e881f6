"""Exception types shared across the package."""


class KirchhoffError(Exception):
    """Base class for all errors raised by this package."""


class CapacityExceeded(KirchhoffError):
    pass


class DomainError(KirchhoffError, ValueError):
    pass


class AliasingBudgetExceeded(KirchhoffError):
    pass


class WeightNotPositive(KirchhoffError):
    pass


class DiscretizationTooCoarse(KirchhoffError):
    pass


class SpectrumTooShort(KirchhoffError):
    pass


class NonResonanceViolated(KirchhoffError):
    """A small divisor fell below the Diophantine threshold."""

    def __init__(self, message, j=None, l=None, gap=None):
        super().__init__(message)
        self.j = j
        self.l = l
        self.gap = gap


class NeumannDiverging(KirchhoffError):
    pass


class MeanNotZero(KirchhoffError):
    pass


class InsufficientData(KirchhoffError):
    pass


class ConfigError(KirchhoffError):
    pass
