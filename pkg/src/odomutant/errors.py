"""Exception hierarchy.

Every error carries the process exit code the CLI should use for it, so the
front end never has to guess how to classify a failure.
"""
from __future__ import annotations


class OdomutantError(Exception):
    exit_code = 5


class ConfigError(OdomutantError):
    """Bad configuration or invalid input data."""

    exit_code = 2


class ValidationError(ConfigError):
    pass


class PreconditionError(OdomutantError):
    exit_code = 3


class DomainError(PreconditionError):
    """The point lies outside the domain of the requested map."""


class InfeasibleError(PreconditionError):
    pass


class Undetermined(PreconditionError):
    """Raised when a result depends on digits that are not available.

    ``needed`` is the smallest prefix length known to be required; callers
    may retry with a longer prefix.
    """

    def __init__(self, message: str, needed: int | None = None):
        super().__init__(message)
        self.needed = needed


class ResourceError(OdomutantError):
    exit_code = 4


class InternalError(OdomutantError):
    """An internal invariant failed. Always a bug."""

    exit_code = 5
