"""Exception types raised on rejected input."""


class MonofamError(ValueError):
    """Base class for rejected input."""


class DimensionError(MonofamError):
    pass


class OrderError(MonofamError):
    """A transition was requested backwards in time."""


class MonotonicityError(MonofamError):
    pass


class ResolutionError(MonofamError):
    """A tolerance is below what the current grid can deliver."""

    def __init__(self, message, achievable=None, required=None):
        super().__init__(message)
        self.achievable = achievable
        self.required = required


class WindowError(MonofamError):
    pass
