"""Exception hierarchy for the calculus engine."""


class EngineError(Exception):
    """Base class for every error raised by the engine."""


class DimensionMismatchError(EngineError):
    pass


class IndexOutOfRangeError(EngineError):
    pass


class InvalidExponentsError(EngineError):
    """Declared weight exponents violate s > 1 or t > s'."""


class NodeBudgetError(EngineError):
    """Deterministic quadrature would exceed its node budget."""


class BudgetTooSmallError(EngineError):
    pass


class MissingDerivativeError(EngineError):
    """An operation needs an analytic Hessian the object does not provide."""


class NoParametrizationError(EngineError):
    pass


class BandUndersampledError(EngineError):
    """Fewer than the minimum number of samples fell inside |G| < epsilon."""

    def __init__(self, epsilon: float, hits: int, minimum: int):
        self.epsilon = epsilon
        self.hits = hits
        self.minimum = minimum
        super().__init__(f"band undersampled: {hits} hits in |G| < {epsilon:g} (need {minimum})")


class GradientUnderflowError(EngineError):
    pass


class NoAdmissibleTauError(EngineError):
    """No threshold tau with mu(g <= tau) > 1/2 was found."""


class SingularPointsError(EngineError):
    """A deterministic rule landed on points where the integrand is undefined."""
