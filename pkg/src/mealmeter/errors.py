"""Exception types shared across the pipeline.

The CLI maps each family to an exit code: config problems exit with 2,
data problems with 3 and numerical failures with 4.
"""

from __future__ import annotations


class MealMeterError(Exception):
    exit_code = 1


class ConfigError(MealMeterError, ValueError):
    exit_code = 2


class DataError(MealMeterError, ValueError):
    exit_code = 3


class ParseError(DataError):
    """A device export could not be read.

    ``line`` is 1-based and refers to the physical line in the file.
    """

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ValidationError(DataError):
    pass


class NumericalError(MealMeterError, ArithmeticError):
    exit_code = 4


class PipelineFormatError(DataError):
    """Model artifact is corrupted or was written by an incompatible version."""
