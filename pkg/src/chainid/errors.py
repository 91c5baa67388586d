"""Exception hierarchy shared by every chainid module."""


class ChainIdError(Exception):
    """Base class for all library errors."""


class SingularityError(ChainIdError):
    """A matrix (or one of its blocks) failed the positive-definiteness test."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class CapabilityError(ChainIdError):
    """The request exceeds a documented size limit (permanent, brute force, ...)."""


class GenerationError(ChainIdError):
    """Rejection sampling ran out of tries."""

    def __init__(self, message, failed_condition=None, counts=None):
        super().__init__(message)
        self.failed_condition = failed_condition
        self.counts = dict(counts or {})


class ConvergenceError(ChainIdError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, gap=None, step=None):
        super().__init__(message)
        self.gap = gap
        self.step = step


class DataError(ChainIdError):
    """Sample data cannot support the requested estimate."""
