"""Exceptions shared across modules."""
from __future__ import annotations


class NCForestError(Exception):
    """Base class for library errors."""


class ResourceCapError(NCForestError):
    """A configured resource cap was exceeded; lower m, r, or the instance size."""


class DecomposableInstanceError(NCForestError):
    """Color bounding boxes do not all overlap: solve the groups independently.

    ``groups`` holds lists of color indices whose boxes form connected
    overlap components.
    """

    def __init__(self, groups: list[list[int]]):
        super().__init__(f"instance decomposes into color groups {groups}")
        self.groups = groups


class ShellError(NCForestError):
    """Shell construction failed; usually the offset delta is too large."""


class NotFittedError(ValueError, AttributeError):
    """Estimator used before fitting."""
