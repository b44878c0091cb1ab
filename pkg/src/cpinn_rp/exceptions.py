"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes, so each class carries one.
"""


class CpinnError(Exception):
    exit_code = 1


class ConfigError(CpinnError, ValueError):
    exit_code = 2


class StructuralError(CpinnError, ValueError):
    """Shapes, arities or file layouts that do not line up."""

    exit_code = 3


class DataError(CpinnError):
    exit_code = 3


class DomainError(CpinnError, ValueError):
    """A coordinate outside the problem domain."""

    exit_code = 3


class NumericError(CpinnError, ArithmeticError):
    """Overflow or NaN somewhere in a computation.

    ``stage`` names the first operation that produced a non-finite value.
    """

    exit_code = 4

    def __init__(self, message, stage=None):
        super().__init__(message if stage is None else f"{message} (stage: {stage})")
        self.stage = stage


class UndefinedCorrelationError(CpinnError, ValueError):
    exit_code = 3


class UnsupportedDiagnosticError(CpinnError):
    exit_code = 2
