"""Exception types shared across the package."""


class IfsimError(Exception):
    """Base class for all package errors."""


class ScenarioInvalid(IfsimError):
    """Scenario file or runtime configuration is unusable."""


class FlowDiverged(IfsimError):
    """Numeric integration left the domain box by a wide margin."""


class PartialMapError(IfsimError):
    """A point map was undefined at some of the points it was applied to."""

    def __init__(self, message: str, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class ExprError(IfsimError):
    """Expression parse failure, with the character offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ZenoAbortError(IfsimError):
    """Raised when a state past the truncation point of an aborted trajectory
    is requested."""

    def __init__(self, message: str, abort_time: float | None = None):
        super().__init__(message)
        self.abort_time = abort_time
