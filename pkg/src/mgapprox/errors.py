"""Exception types raised across the package."""


class UnsupportedMomentError(ValueError):
    """Requested moment order is not finite for the innovation family."""


class ConditionFailure(RuntimeError):
    """A summability prerequisite of a construction does not hold."""


class HorizonLimitedError(ValueError):
    """A tail quantity was requested but no tail model is available."""


class ConfigError(ValueError):
    """Invalid experiment configuration.

    ``field`` carries the dotted key path of the offending entry.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
