"""Exception types shared across the package."""


class TetherPerturbError(Exception):
    """Base class for all package errors."""


class NonPositiveParameter(TetherPerturbError, ValueError):
    pass


class ParticipantOutsideTreadmill(TetherPerturbError, ValueError):
    pass


class DegenerateGeometry(TetherPerturbError, ValueError):
    pass


class Infeasible(TetherPerturbError):
    """No tension triple inside the bounds realises the requested force."""


class UnstableSimulation(TetherPerturbError, RuntimeError):
    pass


class GridTooCoarse(TetherPerturbError, ValueError):
    pass


class WindowNotFound(TetherPerturbError, ValueError):
    pass


class NoStepDetected(TetherPerturbError, ValueError):
    pass


class NonConvexWarning(UserWarning):
    """Two separated local minima of nearly equal fit error."""


class InvalidCadence(TetherPerturbError, ValueError):
    pass


class InsufficientHistory(TetherPerturbError, ValueError):
    pass


class InsufficientCoverage(TetherPerturbError, ValueError):
    pass


class EmptyGroup(TetherPerturbError, ValueError):
    pass


class SingularDesign(TetherPerturbError, ValueError):
    pass


class NonIdentifiableWarning(UserWarning):
    """Random-intercept variance cannot be estimated (single participant)."""


class EStop(TetherPerturbError):
    """Emergency stop raised by an external signal.

    ``result`` carries whatever was completed before the stop.
    """

    def __init__(self, message: str = "emergency stop", result=None):
        super().__init__(message)
        self.result = result


class InvalidConfig(TetherPerturbError, ValueError):
    pass
