"""Semantic exception hierarchy shared across the package."""


class InverseMertonError(Exception):
    """Base class for all package errors."""


class NonFiniteError(InverseMertonError):
    """A numerical kernel evaluation produced NaN or infinity."""


class MaxDepthExceededError(InverseMertonError):
    """Adaptive quadrature hit its recursion limit before meeting tolerance."""


class NotBracketedError(InverseMertonError):
    """Root-finding bracket endpoints do not straddle the target value."""


class OutOfDomainError(InverseMertonError):
    """Query outside a surface's knot hull or declared domain."""


class OutOfRangeError(InverseMertonError):
    """Inversion target lies outside the image of the function."""


class SingularIntegrandError(InverseMertonError):
    """Quadrature hit a zero or negative investment value in the interior."""


class TailNotNegligibleError(InverseMertonError):
    """Estimated truncation tail exceeds the configured share of the target."""


class AboveFrontierError(InverseMertonError):
    """Requested consumption lies at or above the observable frontier."""


class InconsistentPairError(InverseMertonError):
    """Strategy pair failed the consistency check required for recovery."""


class NotTimeHomogeneousError(InverseMertonError):
    """Operation requires a time-homogeneous investment surface."""


class SaturatedError(InverseMertonError):
    """Marginal utility is numerically zero at the requested consumption."""


class ConfigError(InverseMertonError):
    """Job configuration is malformed or inconsistent."""
