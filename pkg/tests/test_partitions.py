import itertools

import pytest

from ncforest.errors import ResourceCapError
from ncforest.quadtree.partitions import (
    block_nesting_depths,
    enumerate_noncrossing_partitions,
    is_noncrossing,
)


def all_set_partitions(n):
    """Oracle: every set partition of range(n), by restricted growth strings."""
    if n == 0:
        yield []
        return

    def rec(i, blocks):
        if i == n:
            yield [list(b) for b in blocks]
            return
        for b in blocks:
            b.append(i)
            yield from rec(i + 1, blocks)
            b.pop()
        blocks.append([i])
        yield from rec(i + 1, blocks)
        blocks.pop()

    yield from rec(0, [])


def crossing_bruteforce(blocks):
    """Oracle: direct four-point interleaving test."""
    label = {}
    for bi, b in enumerate(blocks):
        for x in b:
            label[x] = bi
    pos = sorted(label)
    for a, b, c, d in itertools.combinations(pos, 4):
        if label[a] == label[c] and label[b] == label[d] and label[a] != label[b]:
            return True
    return False


CATALAN = [1, 1, 2, 5, 14, 42, 132, 429, 1430]


class TestCatalanCounts:
    @pytest.mark.parametrize("n", range(0, 9))
    def test_same_color_count_is_catalan(self, n):
        parts = enumerate_noncrossing_partitions(["r"] * n)
        assert len(parts) == CATALAN[n]

    @pytest.mark.parametrize("n", range(0, 8))
    def test_matches_bruteforce_filter(self, n):
        expected = set()
        for blocks in all_set_partitions(n):
            if not crossing_bruteforce(blocks):
                expected.add(tuple(sorted(tuple(sorted(b)) for b in blocks)))
        got = set(enumerate_noncrossing_partitions(["r"] * n))
        assert got == expected


class TestColoredPartitions:
    def test_alternating_two_colors(self):
        # rbrb: blocks are color-homogeneous; {r0,r2} and {b1,b3} cross
        seq = ["r", "b", "r", "b"]
        expected = set()
        for blocks in all_set_partitions(4):
            if crossing_bruteforce(blocks):
                continue
            if all(len({seq[x] for x in b}) == 1 for b in blocks):
                expected.add(tuple(sorted(tuple(sorted(b)) for b in blocks)))
        got = set(enumerate_noncrossing_partitions(seq))
        assert got == expected
        # the fully-merged-per-color partition {02}{13} must be absent
        assert ((0, 2), (1, 3)) not in got

    def test_blocks_are_homogeneous(self):
        seq = ["r", "r", "b", "b", "r"]
        for part in enumerate_noncrossing_partitions(seq):
            for block in part:
                assert len({seq[i] for i in block}) == 1

    def test_min_block_size(self):
        parts = enumerate_noncrossing_partitions(["r"] * 4, min_block=2)
        for part in parts:
            assert all(len(b) >= 2 for b in part)
        assert ((0, 1), (2, 3)) in parts
        assert ((0, 3), (1, 2)) in parts
        assert ((0, 1, 2, 3),) in parts
        assert len(parts) == 3

    def test_empty_sequence(self):
        assert enumerate_noncrossing_partitions([]) == [()]

    def test_cap_enforced(self):
        with pytest.raises(ResourceCapError):
            enumerate_noncrossing_partitions(["r"] * 20, cap=16)


class TestIsNoncrossing:
    @pytest.mark.parametrize("n", range(1, 8))
    def test_agrees_with_bruteforce(self, n):
        for blocks in all_set_partitions(n):
            assert is_noncrossing(blocks) == (not crossing_bruteforce(blocks))


class TestNestingDepths:
    def test_nested_pair(self):
        depths = block_nesting_depths([(0, 3), (1, 2)])
        assert depths == [0, 1]

    def test_disjoint(self):
        depths = block_nesting_depths([(0, 1), (2, 3)])
        assert depths == [0, 0]

    def test_not_nested_when_in_gap(self):
        # {0,2} and {3,4}: 3,4 outside the span of {0,2}
        depths = block_nesting_depths([(0, 2), (3, 4)])
        assert depths == [0, 0]
