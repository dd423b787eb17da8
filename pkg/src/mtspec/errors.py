"""Exception types raised by mtspec."""


class MtspecError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MtspecError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateEstimateError(MtspecError, ArithmeticError):
    """A spectral estimate is zero where its logarithm is required."""

    def __init__(self, message, frequency=None):
        super().__init__(message)
        self.frequency = frequency


class BandwidthTooSmallError(MtspecError, ValueError):
    """The requested halfwidth covers too few grid points."""


class BoundaryCrossingError(MtspecError, ValueError):
    """An interior kernel support reaches a declared discontinuity."""


class GridDegeneracyError(MtspecError, ArithmeticError):
    """The support grid cannot carry the requested polynomial basis."""


class NoTouchPointError(MtspecError, ArithmeticError):
    """No fixed point of f -> f_disc + h0(f) exists on the search interval."""


class PipelineStageError(MtspecError):
    """Failure inside one stage of the adaptive estimator."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
