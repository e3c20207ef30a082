"""Exception hierarchy for the toolkit."""


class SKTError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SKTError, ValueError):
    pass


class DomainError(SKTError, ValueError):
    """An argument lies outside the domain of a formula."""


class RegimeError(SKTError):
    """The parameters are not in the weak or strong competition regime."""


class DiscriminantError(SKTError):
    """D(a, b, c, gamma) <= 0, so the constant branch has no bifurcation points."""


class StateError(SKTError):
    """An operation needs three distinct zeros of h but fewer exist."""


class RootFindingFailure(SKTError):
    pass


class NumericalFailure(SKTError):
    """Base for failures of an iterative or quadrature scheme."""


class QuadratureError(NumericalFailure):
    pass


class NoRootError(NumericalFailure):
    pass


class BracketError(NumericalFailure):
    pass


class AssemblyError(NumericalFailure):
    pass


class ContinuationStall(NumericalFailure):
    pass


class SignError(NumericalFailure):
    """f(z1) and f(z3) share a sign, so no interface fraction balances them."""


class NewtonDivergence(NumericalFailure):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class NegativeDensity(NumericalFailure):
    pass
