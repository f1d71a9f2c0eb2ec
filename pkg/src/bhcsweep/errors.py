"""Exception types shared across the simulation engines."""


class BhcError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(BhcError, ValueError):
    """Invalid or inconsistent model/protocol parameters."""


class CapacityError(BhcError, RuntimeError):
    """A requested computation exceeds a configured size cap."""


class StaleStateError(BhcError, RuntimeError):
    """A state vector no longer satisfies its normalization contract."""


class NormDriftError(BhcError, RuntimeError):
    """Propagation violated the norm-conservation bound."""


class IntegrationError(BhcError, RuntimeError):
    """The ODE integrator failed; carries the protocol angle reached."""

    def __init__(self, message: str, theta: float | None = None):
        super().__init__(message)
        self.theta = theta


class PartialRunError(BhcError, RuntimeError):
    """An observable was requested from a sweep that did not finish."""


class CalibrationRangeError(BhcError, ValueError):
    """A cloud-width calibration target is out of reach; reports the best value."""

    def __init__(self, message: str, epsilon_at_wmax: float):
        super().__init__(message)
        self.epsilon_at_wmax = epsilon_at_wmax


class BranchLossError(BhcError, RuntimeError):
    """Stationary-point continuation lost the branch."""

    def __init__(self, message: str, theta: float):
        super().__init__(message)
        self.theta = theta


class StatisticsError(BhcError, ValueError):
    """Not enough samples for the requested statistic."""
