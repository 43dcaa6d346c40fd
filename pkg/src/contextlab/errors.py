"""Exception types raised across the package."""


class ContextLabError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(ContextLabError):
    pass


class ZeroProbabilityBranch(ContextLabError):
    """Requested measurement outcome has (numerically) zero probability."""


class SequenceTooLong(ContextLabError):
    pass


class PositionOutOfRange(ContextLabError):
    pass


class UnknownLabel(ContextLabError):
    pass


class UnknownSetName(ContextLabError):
    pass


class UnknownStateName(ContextLabError):
    pass


class UnsupportedLabel(ContextLabError):
    pass


class DegenerateUpdate(ContextLabError):
    pass


class ZeroProbabilityCondition(ContextLabError):
    pass


class EmptyPreparationList(ContextLabError):
    pass


class UnsupportedDimension(ContextLabError):
    pass


class NotFiniteSupport(ContextLabError):
    """Operation needs an exactly enumerable hidden-variable distribution."""


class CounterfactualsUnavailable(ContextLabError):
    """Counterfactual flip probabilities are undefined for this system."""
