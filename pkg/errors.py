"""Exception hierarchy with user-friendly messages for the robust BFM engine."""

from typing import List, Optional


class RbfmError(Exception):
    """Base exception carrying a message, troubleshooting suggestions and the failing component."""

    def __init__(self, message: str, suggestions: Optional[List[str]] = None, component: Optional[str] = None):
        self.message = message
        self.suggestions = suggestions or []
        self.component = component
        super().__init__(message)

    def get_formatted_error(self) -> str:
        """Get a formatted error message with suggestions."""
        error_msg = f"❌ {self.message}"

        if self.component:
            error_msg = f"❌ [{self.component.upper()}] {self.message}"

        if self.suggestions:
            error_msg += "\n\n💡 Suggestions:"
            for i, suggestion in enumerate(self.suggestions, 1):
                error_msg += f"\n  {i}. {suggestion}"

        return error_msg


class PreconditionError(RbfmError):
    """An operation was called with arguments outside its contract."""


class NonStochasticRow(RbfmError):
    """A transition kernel row is negative somewhere or does not sum to one."""

    def __init__(self, s: int, a: int, rowsum: float):
        self.s = s
        self.a = a
        self.rowsum = rowsum
        super().__init__(
            f"Kernel row T[{s}][{a}] is not a distribution (sum={rowsum:.15g})",
            suggestions=["Renormalize the kernel rows", "Check for negative probabilities"],
            component="mdp",
        )


class BadDiscount(RbfmError):
    """Discount factor outside the open interval (0, 1)."""

    def __init__(self, gamma: float):
        self.gamma = gamma
        super().__init__(f"Discount gamma={gamma} must lie strictly between 0 and 1", component="mdp")


class BadInitialDistribution(RbfmError):
    """Initial state distribution is not a distribution."""


class DimensionMismatch(RbfmError):
    """Array shapes do not agree with the MDP."""


class NonFinite(RbfmError):
    """A table contains NaN or infinite entries."""


class SingularSystem(RbfmError):
    """A linear system that should be nonsingular could not be solved."""


class NotDistribution(RbfmError):
    """A vector expected to be a probability distribution is not one."""


class EmptyDataset(RbfmError):
    """An operation needs at least one sample."""


class ZeroVector(RbfmError):
    """A vector with zero norm cannot be projected to the sphere."""


class DomainError(RbfmError):
    """A function argument lies outside the function's domain."""


class NoConvergence(RbfmError):
    """An iterative solver stopped without meeting its stopping rule."""


class BadSpec(RbfmError):
    """An environment specification cannot be built."""


class BadMagnitude(RbfmError):
    """A perturbation magnitude is outside the range of its mode."""


class ConfigError(RbfmError):
    """A configuration file is missing or invalid."""


class UnknownMethod(RbfmError):
    """An inference method name is not registered."""
