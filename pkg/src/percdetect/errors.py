"""Exception types raised by the detector and the Monte Carlo lab."""


class InvalidArgumentError(ValueError):
    """An argument is outside the domain an operation accepts."""


class InfeasibleNoiseError(ValueError):
    """No threshold separates background and object percolation regimes.

    Raised when the noise level is not small enough: the open interval of
    thresholds keeping the background subcritical and the object
    supercritical is empty. The offending quantities are kept on the
    instance for diagnostics.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class InvalidRegimeError(ValueError):
    """A percolation estimate was requested on the wrong side of p_c."""


class ImageParseError(ValueError):
    """Malformed image file. ``offset`` is a byte offset (PGM) or line number (CSV)."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at {offset})"
        super().__init__(message)
        self.offset = offset
