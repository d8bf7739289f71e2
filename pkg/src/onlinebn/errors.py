class OnlineBNError(Exception):
    """Base class for library errors."""


class NumericError(OnlineBNError):
    """A numerical failure (exit code 3 at the CLI)."""


class NotChordal(OnlineBNError):
    pass


class TooLarge(OnlineBNError):
    """An enumeration or table would exceed its configured cap."""


class DomainError(OnlineBNError, ValueError):
    pass


class MissingCpt(OnlineBNError, KeyError):
    pass


class InsufficientSamples(OnlineBNError):
    pass


class GenerationFailed(OnlineBNError):
    pass


class NonPositiveTotal(NumericError):
    """No arborescence of positive weight exists."""


class NoArborescence(NumericError):
    pass


class NotOrientable(NumericError):
    """No acyclic orientation within the indegree bound exists."""


class NumericalIntegrityError(NumericError):
    pass
