"""Non-crossing partitions of cyclically ordered colored boundary passes.

A partition is non-crossing if no four positions a < b < c < d (cyclically)
have a, c in one block and b, d in another.  For partitions this property is
rotation-invariant, so the enumeration works on the linear order.
"""
from __future__ import annotations

from itertools import combinations, product
from typing import Sequence

from ..errors import ResourceCapError

DEFAULT_PASS_CAP = 16

Partition = tuple[tuple[int, ...], ...]


def is_noncrossing(blocks: Sequence[Sequence[int]]) -> bool:
    """Check the four-point interleaving condition for index blocks."""
    labeled: dict[int, int] = {}
    for bi, block in enumerate(blocks):
        for idx in block:
            labeled[idx] = bi
    order = sorted(labeled)
    # stack scan: a block must be "closed" before an enclosing one resumes
    stack: list[int] = []
    seen_done: set[int] = set()
    remaining = {bi: len(b) for bi, b in enumerate(blocks)}
    for idx in order:
        bi = labeled[idx]
        if bi in seen_done:
            return False
        if stack and stack[-1] == bi:
            pass
        else:
            if bi in stack:
                # resume an interrupted block: everything above must be done
                while stack and stack[-1] != bi:
                    top = stack.pop()
                    if remaining[top] > 0:
                        return False
                    seen_done.add(top)
            else:
                stack.append(bi)
        remaining[bi] -= 1
    return True


def _canonical(blocks: list[list[int]]) -> Partition:
    return tuple(sorted(tuple(sorted(b)) for b in blocks))


def _enum_range(
    positions: list[int], colors: Sequence[str | int], min_block: int
) -> list[list[list[int]]]:
    """All noncrossing, color-homogeneous partitions of the given positions."""
    if not positions:
        return [[]]
    first = positions[0]
    rest = positions[1:]
    results: list[list[list[int]]] = []
    same = [p for p in rest if colors[p] == colors[first]]
    for size in range(0, len(same) + 1):
        for chosen in combinations(same, size):
            block = [first, *chosen]
            if len(block) < min_block:
                continue
            # split the remaining positions into gaps delimited by the block
            gaps: list[list[int]] = []
            bounds = list(chosen) + [None]
            gi = 0
            current: list[int] = []
            for p in rest:
                if gi < len(chosen) and p == chosen[gi]:
                    gaps.append(current)
                    current = []
                    gi += 1
                else:
                    current.append(p)
            gaps.append(current)
            sub_results = [_enum_range(g, colors, min_block) for g in gaps]
            for combo in product(*sub_results):
                merged = [block]
                for part in combo:
                    merged.extend(part)
                results.append(merged)
    return results


def enumerate_noncrossing_partitions(
    passes: Sequence[str | int],
    min_block: int = 1,
    cap: int = DEFAULT_PASS_CAP,
) -> list[Partition]:
    """All color-homogeneous non-crossing partitions of the pass sequence.

    ``passes`` is the cyclic sequence of pass colors around a boundary.  For
    n same-color passes the count is the n-th Catalan number.  Raises
    ResourceCapError beyond ``cap`` passes (lower m or r to shrink configs).
    """
    n = len(passes)
    if n > cap:
        raise ResourceCapError(
            f"{n} passes exceeds the partition cap {cap}; lower m or r"
        )
    if n == 0:
        return [()]
    raw = _enum_range(list(range(n)), passes, min_block)
    return [_canonical(blocks) for blocks in raw]


def block_nesting_depths(blocks: Sequence[Sequence[int]]) -> list[int]:
    """Nesting depth per block: how many other blocks enclose it.

    Block A encloses block B when all of B's positions fall inside one gap
    between consecutive positions of A (linear reading).
    """
    depths = []
    spans = [(min(b), max(b)) for b in blocks]
    for i, (lo_i, hi_i) in enumerate(spans):
        d = 0
        for j, block_j in enumerate(blocks):
            if i == j:
                continue
            lo_j, hi_j = spans[j]
            if lo_j < lo_i and hi_i < hi_j:
                # inside j's span; nested iff within a single gap of j
                inside = [p for p in block_j if lo_i < p < hi_i]
                if not inside:
                    d += 1
        depths.append(d)
    return depths
