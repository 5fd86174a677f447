"""Exception types shared across the package."""


class PanosimError(Exception):
    """Base class for all package-specific errors."""


class InvalidPoseError(PanosimError, ValueError):
    pass


class InvalidDirectionError(PanosimError, ValueError):
    pass


class PixelBoundsError(PanosimError, IndexError):
    pass


class ShapeError(PanosimError, ValueError):
    pass


class EmptySceneError(PanosimError, ValueError):
    pass


class DegenerateHullError(PanosimError, ValueError):
    pass


class UnreachableError(PanosimError, RuntimeError):
    pass


class GenerationError(PanosimError, RuntimeError):
    pass


class InitConvergenceError(PanosimError, RuntimeError):
    """Identity initialization did not reach its residual target."""

    def __init__(self, residual: float, target: float):
        super().__init__(
            f"identity init stalled at residual {residual:.4g} (target {target:.4g})"
        )
        self.residual = residual
        self.target = target


class DivergenceError(PanosimError, RuntimeError):
    pass


class NetworkStateError(PanosimError, RuntimeError):
    pass


class EpisodeStateError(PanosimError, RuntimeError):
    pass


class TrajectoryFormatError(PanosimError, ValueError):
    pass


class ProtocolError(PanosimError, ValueError):
    pass
