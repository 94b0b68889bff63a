"""Exception types shared across the package."""


class TdpError(Exception):
    """Base class for run-time failures raised by this package."""


class NumericError(TdpError):
    """A numerical routine failed to converge or hit a singular system."""


class InvariantViolation(TdpError):
    """A monotonicity/tightness/ordering invariant was observed to fail."""
