"""Exception hierarchy shared by every module."""


class NHVIError(Exception):
    """Base class for all errors raised by the package."""


class ConfigurationError(NHVIError):
    """Inconsistent dimensions, bad parameters or malformed configuration."""


class EvaluationError(NHVIError):
    """A user-supplied function returned a non-finite value."""


class DegenerateIntervalError(NHVIError):
    """A pair with (numerically) coincident times was evaluated."""


class PathError(NHVIError):
    """A discrete path with non-increasing times."""


class AdmissibilityError(NHVIError):
    """A pair violates the discrete constraints beyond tolerance."""


class ConvergenceError(NHVIError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, message, residual_norm=float("nan"), iterations=0):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations


class DegeneracyError(NHVIError):
    """The implicit step equations are singular or numerically rank deficient."""


class TimeCollapseError(NHVIError):
    """The solved step does not advance time (t_{k+1} <= t_k)."""


class InvarianceError(NHVIError):
    """A discrete Lagrangian is not invariant under the claimed symmetry."""


class SectionError(NHVIError):
    """A section of g^D produces a generator outside the constraint distribution."""


class NotChaplyginError(NHVIError):
    """The symmetry has directions compatible with the constraints (g^D nontrivial)."""


class ChaplyginAssumptionError(NHVIError):
    """A structural hypothesis of the Chaplygin reduction fails."""


class OracleError(NHVIError):
    """The continuous reference integration failed."""


class StepFailure(NHVIError):
    """A trajectory run stopped early; carries the partial trajectory."""

    def __init__(self, index, cause, trajectory):
        super().__init__(f"step {index} failed: {type(cause).__name__}: {cause}")
        self.index = index
        self.cause = cause
        self.trajectory = trajectory


class NearZeroEnergyWarning(UserWarning):
    """The discrete energy is close to zero, where time steps may collapse."""
