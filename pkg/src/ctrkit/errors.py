"""Exception types raised by the kinematics toolkit."""


class CtrError(Exception):
    """Base class for all toolkit errors."""


class InvalidConfigurationError(CtrError):
    """Actuation vector violates the telescoping geometry (tube end at or
    below the base plate, non-decreasing tube ends, ...)."""


class SingularClosureError(CtrError):
    """No active tube carries bending stiffness, the curvature closure is
    undefined."""


class IntegrationError(CtrError):
    """The arc-length integration produced NaNs or failed to advance."""


class ConvergenceError(CtrError):
    """Shooting iteration did not reach the residual tolerance.

    Carries the best iterate found so far.
    """

    def __init__(self, message, best_guess=None, best_residual=None, iterations=0):
        super().__init__(message)
        self.best_guess = best_guess
        self.best_residual = best_residual
        self.iterations = iterations


class IllPosedModelError(CtrError):
    """The boundary-residual Jacobian w.r.t. the unknown initials is rank
    deficient below the pseudo-inverse cutoff; distinct from an ordinary
    robot singularity."""


class SingularConfigurationError(CtrError):
    """A manipulability ellipsoid matrix is numerically singular."""
