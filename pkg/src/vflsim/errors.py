"""Exception hierarchy shared across the simulator."""


class VflError(Exception):
    """Base class for every error raised by vflsim."""


class ShapeError(VflError, ValueError):
    pass


class ContractError(VflError, RuntimeError):
    """A caller broke a usage contract (e.g. a stale forward cache)."""


class KeyMismatchError(VflError):
    pass


class PlaintextRangeError(VflError, ValueError):
    pass


class FixedPointOverflowError(VflError, OverflowError):
    pass


class ProtocolError(VflError):
    pass


class AlignmentError(VflError, ValueError):
    pass


class TrainingError(VflError, RuntimeError):
    """Training diverged; ``diagnostics`` holds the loss trace so far."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class IngestionError(VflError, ValueError):
    pass


class SplitError(VflError, ValueError):
    pass


class InfeasibleTimelineError(VflError, ValueError):
    pass


class ConfigError(VflError, ValueError):
    pass


class StageError(VflError):
    """Wraps a failure inside one pipeline stage, tagging which stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
