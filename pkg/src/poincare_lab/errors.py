"""Exception hierarchy shared by all modules."""


class PoincareLabError(Exception):
    """Base class for library errors."""


class DomainError(PoincareLabError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ReflexivityError(DomainError):
    """A unit relation is missing a diagonal pair."""


class NestingError(DomainError):
    """Scale relations are not nested."""


class UndefinedPairError(DomainError):
    """VOL* requested for a pair outside the unit scale."""


class ParameterError(DomainError):
    """Invalid numerical parameter."""


class DegenerateInputError(DomainError):
    """Input for which the quantity is not defined (zero seminorm, empty family...)."""


class InfeasibleError(PoincareLabError):
    """The hypotheses of a bound cannot be met with the given data."""


class InconsistencyError(PoincareLabError):
    """An identity that must hold by construction failed numerically."""
