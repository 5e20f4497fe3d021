"""k-colored non-crossing Euclidean Steiner forests.

Library + CLI for building pairwise non-crossing Steiner trees, one per
color class, with strict validation, per-run length certificates, and
oracle comparisons on tiny instances.
"""
from .geometry import (
    Forest,
    Instance,
    PlaneTree,
    Point,
    SolutionReport,
    forest_validate,
    is_valid,
    orientation,
    segments_cross,
    total_length,
)
from .steiner import SteinerResult, euclidean_mst, steiner_subtree_prune, steiner_tree

__version__ = "0.1.0"

__all__ = [
    "Forest",
    "Instance",
    "PlaneTree",
    "Point",
    "SolutionReport",
    "SteinerResult",
    "euclidean_mst",
    "forest_validate",
    "is_valid",
    "orientation",
    "segments_cross",
    "steiner_subtree_prune",
    "steiner_tree",
    "total_length",
]
