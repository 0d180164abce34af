"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: usage errors -> 2, schema errors -> 3,
numeric failures -> 4.
"""


class WelfareRankError(Exception):
    """Base class for all package errors."""


class DomainError(WelfareRankError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(WelfareRankError, ValueError):
    """An unsupported option or inconsistent configuration."""


class InputError(WelfareRankError, ValueError):
    """Empty or otherwise unusable input data."""


class SchemaError(WelfareRankError, ValueError):
    """Mismatched dimensions, missing columns or malformed files."""


class NumericError(WelfareRankError, ArithmeticError):
    """A solver failed to converge or produced a degenerate result."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RankDeficiencyError(NumericError):
    """A design matrix does not have full column rank."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class SeparationError(NumericError):
    """Perfect or quasi-perfect separation in a binary-choice fit."""


class DegenerateFitError(NumericError):
    """The outcome carries no information for the requested fit."""


class DegenerateSelectionError(NumericError):
    """A recommendation threshold selected no mass."""


class MissingArtifactError(WelfareRankError, FileNotFoundError):
    """A pipeline stage needs an artifact that has not been produced."""


class UsageError(WelfareRankError, ValueError):
    """A command-line request that names an unknown stage, figure or schema."""
