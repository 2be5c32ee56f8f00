"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so the command line
can map them to a single exit status.
"""


class LcDebiasError(Exception):
    """Base class for all package errors."""


class InvalidParameter(LcDebiasError, ValueError):
    pass


class DimensionMismatch(InvalidParameter):
    pass


class TooRough(InvalidParameter):
    """Functional smoothness s <= 1 leaves no room for bias reduction."""


class NumericalError(LcDebiasError, ArithmeticError):
    pass


class NonFinite(NumericalError):
    pass


class SingularFisher(NumericalError):
    pass


class SingularMatrix(NumericalError):
    pass


class NonIntegrable(NumericalError):
    pass


class NotConverged(NumericalError):
    pass


class MleFailure(NumericalError):
    pass


class AllReplicatesFailed(NumericalError):
    pass


class DegenerateSample(NumericalError):
    pass


class UnsupportedSampler(LcDebiasError, TypeError):
    pass


class TableNotBuilt(LcDebiasError, RuntimeError):
    pass


class ConfigError(InvalidParameter):
    """Malformed or invalid run configuration."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field


class ValidationError(ConfigError):
    """Carries every violation found, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
