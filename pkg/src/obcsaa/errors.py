"""Exception types shared across the package."""


class OBCSAAError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(OBCSAAError, ValueError):
    """A scalar parameter lies outside its admissible domain."""


class ShapeError(OBCSAAError, ValueError):
    """Array lengths or matrix dimensions do not agree."""


class ChannelError(OBCSAAError, ValueError):
    """Non-positive channel gain or otherwise unusable channel state."""


class ConstraintError(OBCSAAError, ValueError):
    """A scheduling decision violates the per-worker peak power limit."""


class InfeasibleError(OBCSAAError, ValueError):
    """No worker is scheduled, so the post-processing factor is undefined."""


class FormatError(OBCSAAError, ValueError):
    """Malformed IDX file or configuration document."""


class NumericError(OBCSAAError, ArithmeticError):
    """Non-finite values appeared during a computation."""
