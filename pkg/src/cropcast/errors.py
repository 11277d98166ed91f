"""Exception types shared across the package.

Every failure mode the library reports deliberately (bad input, missing
history, infeasible calibration, ...) raises a distinct subclass so callers
can discriminate without parsing messages.
"""


class CropcastError(Exception):
    """Base class for all errors raised by this package."""


class CalendarError(CropcastError, ValueError):
    """Commodity/calendar mismatch or invalid marketing-year arithmetic."""


class WindowBoundsError(CropcastError, IndexError):
    """A requested month window falls outside the stamped series range."""


class InputError(CropcastError, ValueError):
    """A forecaster or constructor received data violating its precondition."""


class ParseError(CropcastError, ValueError):
    """A raw data file could not be parsed; carries file/line context."""

    def __init__(self, message, path=None, line=None):
        super().__init__(message)
        self.path = path
        self.line = line


class IntegrityError(CropcastError, ValueError):
    """Duplicate keys with conflicting values in an ingested table."""


class HistoryError(CropcastError, ValueError):
    """Not enough prior marketing years to build a historical average."""


class CoverageError(CropcastError, ValueError):
    """Dataset does not cover a required month, contract, or split range."""


class SchemaError(CropcastError, ValueError):
    """An external-forecast file violates the documented line schema."""


class SelectionError(CropcastError, RuntimeError):
    """No grid point could be fitted during model selection."""


class ConvergenceError(CropcastError, RuntimeError):
    """A numerical optimizer failed to converge for a specific model order."""


class MetricError(CropcastError, ValueError):
    """A metric is undefined for the given inputs (e.g. MAPE with zero actual)."""


class DegenerateVarianceError(CropcastError, ValueError):
    """Loss differential has zero HAC variance but a nonzero mean."""


class CalibrationError(CropcastError, RuntimeError):
    """Kernel calibration search exhausted its budget; carries nearest miss."""

    def __init__(self, message, nearest=None):
        super().__init__(message)
        self.nearest = nearest


class GenerationError(CropcastError, RuntimeError):
    """Sampler could not produce an all-positive path within the retry budget."""
