"""Exception hierarchy.

Every error raised by the toolkit derives from IonOpticsError so callers
can catch one base class. The CLI maps subclasses to distinct exit codes.
"""


class IonOpticsError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(IonOpticsError):
    """An argument violates a documented precondition."""


class ScenarioError(IonOpticsError):
    """A scenario file failed to parse or validate."""


class ConvergenceError(IonOpticsError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class SamplingError(IonOpticsError):
    """A grid is too coarse to represent the requested field."""


class PropagationWindowError(IonOpticsError):
    """A propagation distance would push the beam outside the safe grid window."""


class InvalidGeometryError(IonOpticsError):
    """An optical element does not overlap the simulation grid."""


class SingularConfigurationError(IonOpticsError):
    """A beam transform is degenerate (C q + D = 0)."""


class NoTirError(IonOpticsError):
    """Total internal reflection cannot occur for the given indices."""


class TrappedRayError(IonOpticsError):
    """The reflected ray exceeds the critical angle at the top surface."""


class InfeasibleDesignError(IonOpticsError):
    """No lens stack satisfies the design targets; message names the constraint."""


class FocusNotBracketedError(IonOpticsError):
    """The axial search window does not contain a width minimum."""
