class LevyError(Exception):
    """Root of every error raised by this library."""


class DomainError(LevyError, ValueError):
    """An argument lies outside the domain of the operation."""


class HypothesisError(DomainError):
    """A hypothesis of the identity being evaluated does not hold for the model."""


class ScopeError(DomainError):
    """The request is outside what the Monte Carlo oracle can simulate exactly."""


class ConfigError(LevyError, ValueError):
    """A model config file or simulation config could not be read or validated."""


class ConvergenceError(LevyError, RuntimeError):
    """An iterative numerical procedure did not reach its tolerance."""


class QuadratureError(ConvergenceError):
    """Adaptive quadrature did not reach its error tolerance."""


def require_net_profit(model, strict: bool = True) -> float:
    # Returns psi'(0+) so callers don't need to recompute it
    mean = model.psi_prime_at_zero
    if model.is_pure_drift:
        raise HypothesisError("process must have non-monotone paths (pure drift given)")
    if strict and not mean > 0:
        raise HypothesisError(f"net profit condition psi'(0+) > 0 violated (psi'(0+) = {mean!r})")
    if not strict and mean < 0:
        raise HypothesisError(f"hypothesis psi'(0+) >= 0 violated (psi'(0+) = {mean!r})")
    return mean
