"""Quadtree-portal dynamic programming engine and its pipelines."""
from .partitions import enumerate_noncrossing_partitions, is_noncrossing

__all__ = ["enumerate_noncrossing_partitions", "is_noncrossing"]
