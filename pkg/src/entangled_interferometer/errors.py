"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An input falls outside the domain of an operation."""


class AmbiguityError(DomainError):
    """Integer fringe ambiguity cannot be resolved from the given inputs."""


class SearchBoundError(DomainError):
    """An integer search would exceed its candidate budget."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerances.

    ``best`` holds the best iterate reached, so callers can still inspect it.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best
