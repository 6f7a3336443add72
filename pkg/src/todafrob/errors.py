"""Shared exception types."""


class WindowOverflowError(ValueError):
    """A series operation left the configured exponent window and truncation is disallowed."""


class NumericalError(RuntimeError):
    """An iterative numerical procedure failed (Newton divergence, branch loss, ...)."""


class InvalidPointError(ValueError):
    """A manifold point violates a structural requirement (window shape, monic top, ...)."""
