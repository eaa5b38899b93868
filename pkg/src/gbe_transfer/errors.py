"""Exception types shared across the package."""


class GBEError(Exception):
    """Base class for errors raised by gbe_transfer."""


class DomainError(GBEError, ValueError):
    """A numeric argument lies outside the region where an operation is defined."""


class ParabolicSingularityError(DomainError):
    """A transfer step is exactly parabolic (``z**2 == k / N``)."""

    def __init__(self, k, z):
        self.k = k
        self.z = z
        super().__init__(f"parabolic transfer step at k={k} for z={z!r}")


class CutViolationError(DomainError):
    """A point lies on (or too close to) a branch cut ``[-sqrt(t), sqrt(t)]``."""


class RangeGuardError(GBEError, ValueError):
    """A request exceeds a hard guard (combinatorial size, series range, ...)."""
