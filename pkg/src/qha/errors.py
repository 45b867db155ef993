"""Exception hierarchy shared by the numerical modules and the CLI."""


class QHAError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(QHAError, ValueError):
    """An experiment configuration is malformed or inconsistent."""


class DimensionError(QHAError, ValueError):
    """A group point does not match the chart dimension of its model."""


class GridMismatchError(QHAError, ValueError):
    """Two states or operators live on different sample grids."""


class NotHomogeneousError(QHAError, ValueError):
    """A dilation was requested on a model without homogeneous structure."""


class NumericalGuardError(QHAError):
    """A numerical safety check failed; results would be silently wrong.

    ``guard`` names the check so the CLI can report it.
    """

    guard = "numerical"

    def __init__(self, message, guard=None):
        super().__init__(message)
        if guard is not None:
            self.guard = guard


class ZeroMeasureError(NumericalGuardError):
    guard = "zero-measure"


class WrapAroundError(NumericalGuardError):
    guard = "wrap-around"


class AdmissibilityError(NumericalGuardError):
    guard = "admissibility"


class TruncationError(NumericalGuardError):
    guard = "truncation"


class SpectrumGuardError(NumericalGuardError):
    guard = "spectrum"
