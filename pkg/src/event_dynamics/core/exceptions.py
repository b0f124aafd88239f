"""Custom exceptions for event_dynamics."""

from __future__ import annotations


class EventDynamicsError(Exception):
    """Base exception for event_dynamics."""

    def __init__(self, message: str, details: dict[str, object] | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}


class NumericsError(EventDynamicsError):
    """Error raised by a numeric building block."""

    pass


class NonFiniteIntegrand(NumericsError):
    """Integrand produced a NaN or infinite value."""

    pass


class ToleranceNotMet(NumericsError):
    """Adaptive quadrature exhausted its subdivision budget."""

    pass


class NonFiniteVectorField(NumericsError):
    """ODE right-hand side produced a NaN or infinite value."""

    pass


class DomainError(NumericsError):
    """A primitive was evaluated outside its mathematical domain."""

    pass


class ShapeError(NumericsError):
    """Array shapes are incompatible."""

    pass


class NonFiniteGradient(NumericsError):
    """Gradient contains NaN or infinite entries."""

    def __init__(self, parameter: str) -> None:
        super().__init__(
            f"Non-finite gradient for parameter '{parameter}'",
            details={"parameter": parameter},
        )
        self.parameter = parameter


class NonFiniteState(NumericsError):
    """Euler-integrated hidden state became NaN or infinite."""

    pass


class PriorError(EventDynamicsError):
    """Error in the renewal prior."""

    pass


class InvalidDrive(PriorError):
    """Drive value is not strictly greater than one."""

    def __init__(self, drive: float) -> None:
        super().__init__(
            f"Drive must be strictly greater than 1, got {drive!r}",
            details={"drive": drive},
        )
        self.drive = drive


class UnboundedRate(PriorError):
    """Rate function has no finite upper bound for thinning."""

    pass


class KlBoundError(EventDynamicsError):
    """Error while evaluating the KL bound."""

    pass


class OutOfDomain(KlBoundError):
    """Change-of-variables coordinate lies outside its domain."""

    def __init__(self, m: float, lower: float) -> None:
        super().__init__(
            f"m={m!r} lies outside [{lower!r}, 0)",
            details={"m": m, "lower": lower},
        )
        self.m = m


class MixtureError(EventDynamicsError):
    """Error in the lognormal interval mixture."""

    pass


class InvalidTemperature(MixtureError):
    """Relaxed sampling temperature is not positive."""

    def __init__(self, temperature: float) -> None:
        super().__init__(
            f"Relaxation temperature must be positive, got {temperature!r}",
            details={"temperature": temperature},
        )
        self.temperature = temperature


class EventModelError(EventDynamicsError):
    """Error in the next-event surrogate or its unrolling."""

    pass


class DegenerateRate(EventModelError):
    """Event cap reached because predicted intervals collapsed to the floor."""

    pass


class GraphError(EventDynamicsError):
    """Error while building a relational graph."""

    pass


class DegenerateChannel(GraphError):
    """Channel has zero variance, so its correlation is undefined."""

    def __init__(self, channel: int) -> None:
        super().__init__(
            f"Channel {channel} has zero variance",
            details={"channel": channel},
        )
        self.channel = channel


class StabilityError(EventDynamicsError):
    """Error in the stability verification harness."""

    pass


class TheoremViolation(StabilityError):
    """An empirical deviation exceeded its proven bound."""

    pass


class DataGenerationError(EventDynamicsError):
    """Error while generating synthetic data."""

    pass


class DegenerateBand(DataGenerationError):
    """Band holds too little probability mass for rejection sampling."""

    pass


class CollisionError(DataGenerationError):
    """Could not draw a rate distinct from all previous draws."""

    pass


class EmptyBand(DataGenerationError):
    """No evaluation records fall in a requested band."""

    def __init__(self, band: str) -> None:
        super().__init__(f"No records for band '{band}'", details={"band": band})
        self.band = band


class TrainingError(EventDynamicsError):
    """Error during model training."""

    pass


class NonFiniteLoss(TrainingError):
    """A loss component evaluated to NaN or infinity."""

    def __init__(self, component: str) -> None:
        super().__init__(
            f"Loss component '{component}' is not finite",
            details={"component": component},
        )
        self.component = component


class TrainingDiverged(TrainingError):
    """Training loss exceeded the divergence threshold."""

    pass


class CheckpointError(EventDynamicsError):
    """Checkpoint file is missing or malformed."""

    pass


class DatasetError(EventDynamicsError):
    """Dataset file is missing or malformed."""

    pass


class ConfigurationError(EventDynamicsError):
    """Configuration error."""

    pass
