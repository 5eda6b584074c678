"""Custom exceptions for rangelab."""

from typing import List, Optional, Sequence, Tuple


class RangeLabError(Exception):
    """Base exception for rangelab."""

    pass


class ConfigurationError(RangeLabError):
    """Configuration error."""

    pass


class PreconditionError(RangeLabError):
    """An operation was called outside its domain."""

    pass


class GuardRefusalError(RangeLabError):
    """Instance size exceeds an enumeration guard."""

    def __init__(self, message: str, bound: float = 0, requested: float = 0):
        super().__init__(message)
        self.bound = bound
        self.requested = requested


class UnsupportedConditionError(RangeLabError):
    """Condition check requested for an unsupported model."""

    def __init__(self, message: str, supported: Sequence[Tuple[int, str]] = ()):
        super().__init__(message)
        self.supported: List[Tuple[int, str]] = list(supported)


class ShootingError(RangeLabError):
    """Boundary blow-up shooting failed to bracket."""

    def __init__(self, message: str, trace: Optional[List[Tuple[float, float]]] = None):
        super().__init__(message)
        self.trace = trace or []


class CompositionViolationError(RangeLabError):
    """Ribs passed to compose are not mutually avoiding."""

    pass


class ModelNotFoundError(RangeLabError):
    """Model not found error."""

    pass


class ArtifactNotFoundError(RangeLabError):
    """Artifact file missing."""

    pass
