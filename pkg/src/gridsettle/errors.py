"""Exception types shared across the package."""


class GridsettleError(Exception):
    """Base class for all package errors."""


class DataFormatError(GridsettleError):
    """A data file is missing, malformed, or fails validation.

    Carries enough context (file, line, column) to point at the offending
    cell when the error originates from a CSV row.
    """

    def __init__(self, message, file=None, line=None, column=None):
        self.file = file
        self.line = line
        self.column = column
        parts = []
        if file is not None:
            parts.append(str(file))
        if line is not None:
            parts.append(f"line {line}")
        if column is not None:
            parts.append(f"column {column!r}")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class InfeasibleProblemError(GridsettleError):
    """The optimization problem has no feasible solution."""


class UnboundedProblemError(GridsettleError):
    """The optimization problem is unbounded below."""


class ConfigError(GridsettleError):
    """An experiment configuration is invalid."""
