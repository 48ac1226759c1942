"""Exception types raised across the package.

Constraint violations inside likelihoods are not errors: they evaluate to -inf.
"""


class RealizedGarchError(Exception):
    """Base class for every error raised on purpose by this package."""


class DomainError(RealizedGarchError, ValueError):
    """Argument outside the mathematical domain of a function."""


class DataError(RealizedGarchError, ValueError):
    """Invalid input data (bad values, schema violations, unparseable rows)."""

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = list(rows or [])


class InsufficientDataError(DataError):
    """Not enough observations for the requested computation."""


class ConfigurationError(RealizedGarchError, ValueError):
    pass


class EstimationError(RealizedGarchError, RuntimeError):
    """Estimation failed; `diagnostics` carries optimizer details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class StudyError(RealizedGarchError, RuntimeError):
    pass


class ReportError(RealizedGarchError, ValueError):
    pass
