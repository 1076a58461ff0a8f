"""Exception hierarchy shared by every module."""

from __future__ import annotations


class AdvCalError(Exception):
    """Base class for all toolkit errors."""


class InvalidLossError(AdvCalError, ValueError):
    """Loss parameters are malformed or declared properties fail verification."""


class DomainError(AdvCalError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedReductionError(AdvCalError):
    """The requested closed-form or reduced evaluation path does not apply."""


class UnsupportedDimensionError(AdvCalError):
    """Grid-based paths are only available in low dimension."""


class UnsupportedFamilyError(AdvCalError):
    """The operation is not defined for this hypothesis family."""


class ConfigurationError(AdvCalError, ValueError):
    """A configuration or grid specification is invalid."""


class InapplicableError(AdvCalError):
    """A theorem's structural assumptions do not hold for the given inputs."""
