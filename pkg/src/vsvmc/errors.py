"""Exception hierarchy.

Errors raised while validating inputs derive from ``ValueError`` so callers
that only care about bad input can catch the builtin. Numerical breakdowns
derive from :class:`NumericalFailure`; the CLI maps them to exit code 3.
"""


class VSVError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(VSVError, ValueError):
    """Input violates a documented precondition."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")


class NotSymmetric(ValidationError):
    pass


class BadDiagonal(ValidationError):
    pass


class NotPositiveDefinite(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class DimensionError(ValidationError):
    """Estimator requested for a dimension it does not support."""


class DomainError(ValidationError):
    pass


class UnsupportedCombination(ValidationError):
    pass


class BadInitialValue(ValidationError):
    pass


class BackendContract(ValidationError):
    """Noise backend cannot deliver the joint law an estimator needs."""


class ModeContract(BackendContract):
    pass


class GridIncompatible(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class ConfigValidationError(ValidationError):
    """Aggregates every field-level problem found in a config file."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalFailure(VSVError, ArithmeticError):
    pass


class NoConvergence(NumericalFailure):
    pass


class FactorizationFailure(NumericalFailure):
    pass


class QuadratureFailure(NumericalFailure):
    pass
