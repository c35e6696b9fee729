"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration document or command-line quantity."""


class DriveConstraintError(ConfigError):
    """Drive currents violate the gain-switching operating constraints."""


class NonLasingError(RuntimeError):
    """An operation required a lasing pulse train but none was produced."""


class NumericalError(RuntimeError):
    """Integration produced a non-finite state.

    Carries enough context (step index, state, inputs) to reproduce the
    failure.
    """

    def __init__(self, message: str, step: int | None = None, state=None):
        super().__init__(message)
        self.step = step
        self.state = state


class TraceFormatError(ValueError):
    """A trace file does not conform to the expected CSV or binary layout."""
