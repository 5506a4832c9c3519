"""Exception types raised across the package."""


class WasteGraspError(Exception):
    """Base class for every error this package raises on purpose."""


class DimensionError(WasteGraspError, ValueError):
    pass


class InvalidDepthError(WasteGraspError, ValueError):
    pass


class InvalidTransformError(WasteGraspError, ValueError):
    pass


class EmptyCloudError(WasteGraspError, ValueError):
    pass


class DegenerateGeometryError(WasteGraspError, ValueError):
    pass


class NoGraspFoundError(WasteGraspError):
    pass


class ObjectMissedError(WasteGraspError):
    """The gripper closed down to its minimum opening without touching anything."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ControllerTimeoutError(WasteGraspError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class UndefinedLossError(WasteGraspError, ValueError):
    pass


class InvalidBoxError(WasteGraspError, ValueError):
    pass


class UndefinedMetricError(WasteGraspError, ValueError):
    pass
