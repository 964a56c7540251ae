"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the validity range of a property or flow function."""


class InfeasibleFlowError(ValueError):
    """Requested mass flow exceeds the choked flow for the given state."""


class ExtrapolationError(ValueError):
    """Map query outside the table hull (no silent clamping)."""


class InvalidDegradationError(ValueError):
    """Degradation deltas would push a scaled efficiency out of (0, 1]."""


class SizingError(ValueError):
    """Design targets are thermodynamically inconsistent."""

    def __init__(self, relation: str, message: str = ""):
        self.relation = relation
        super().__init__(f"design sizing failed at: {relation}" + (f" ({message})" if message else ""))


class ConvergenceError(RuntimeError):
    """Newton matching failed; carries the last scaled residual vector."""

    def __init__(self, message, residuals=None, iterations=None):
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations


class EnvelopeError(ValueError):
    """Operating inputs outside the solvable envelope (map edge or rejection rate)."""


class ConfigurationError(ValueError):
    """Missing station, area, or inconsistent configuration record."""


class SchemaError(ValueError):
    """Dataset or config file failed schema/version validation."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class DegenerateOperatingPointError(ValueError):
    """Turbine enthalpy drop vanished; power loss undefined."""
