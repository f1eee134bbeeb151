"""Exception types raised across the package."""


class ShotNoiseError(Exception):
    pass


class PoleError(ShotNoiseError, ValueError):
    """Dispersive-shift denominator too close to zero."""


class CalibrationError(ShotNoiseError, ValueError):
    pass


class TruncationError(ShotNoiseError):
    """Photon-number truncation too small for the requested occupancy."""


class PropagationError(ShotNoiseError):
    """Numerical propagation violated a state invariant.

    ``delay`` carries the offending sequence delay (s) when known.
    """

    def __init__(self, message, delay=None):
        super().__init__(message)
        self.delay = delay


class ConfigError(ShotNoiseError, ValueError):
    pass


class SchemaError(ShotNoiseError, ValueError):
    """A CSV input does not match the expected schema.

    ``row`` is the 1-based line number of the offending row.
    """

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row
