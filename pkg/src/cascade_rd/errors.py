"""Exception types shared across the solver modules."""


class InfeasibleError(Exception):
    """Query lies outside the rate-distortion region; carries the threshold."""

    def __init__(self, message: str, threshold: float | None = None):
        super().__init__(message)
        self.threshold = threshold


class NumericDomainError(ValueError):
    """Input violates a numeric-domain requirement (e.g. non-PSD covariance)."""


class FactorizationError(ValueError):
    """Joint distribution does not factor the way the setting requires."""


class ResourceLimitError(RuntimeError):
    """Requested computation exceeds a desk-scale resource cap."""
