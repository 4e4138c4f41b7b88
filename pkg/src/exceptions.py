"""Exception hierarchy for the LCP-HAI library."""


class LCPError(ValueError):
    """Base class for every domain error raised by the library."""


class LogValidationError(LCPError):
    """A bandit log or counterfactual table violates its invariants."""

    def __init__(self, message: str, violations: list | None = None):
        super().__init__(message)
        self.violations = violations or []


class EstimatorError(LCPError):
    """An objective cannot be evaluated on the given inputs."""


class PropensityError(LCPError):
    """A propensity or assignment model cannot be fitted or queried."""


class HBMError(LCPError):
    """A human behavior model or worker pool was misused."""


class DataGenError(LCPError):
    """A synthetic generator received invalid parameters."""


class OODError(LCPError):
    """An out-of-distribution detector cannot be fitted or tuned."""


class TrainingError(LCPError):
    """Training diverged or was configured inconsistently."""


class ConfigError(LCPError):
    """A configuration file or environment value is invalid."""


class StatisticsError(LCPError):
    """A statistical test received samples it cannot handle."""
