"""Shifted quadtree dissection: squares, grid-line levels, portal placement.

The box has side 2L and sits at corner (-a, -b) relative to the snapped
instance grid, with the shift (a, b) drawn uniformly from [0, L-1]^2.  All
coordinates here are "box coordinates" (u, t) in [0, 2L]: u indexes the grid
line, t runs along it; instance grid coordinates are recovered by
subtracting the shift.

A line whose offset u is divisible by 2^(D - d) bounds level-d squares
(D = log2(2L) is the leaf depth); its level is the smallest such d.  A
level-i line carries 2^i * m equally spaced portals, nudged off integer
grid corners, so each square edge holds at most m of them.  Two caps keep
desk-scale dynamic programs finite: at most ``m_cap`` portals per top-level
edge extent and at most ``leaf_m`` per unit cell extent.  Both truncations
are deterministic functions of the line, so neighboring squares always
agree on the surviving portals.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .perturb import PerturbedInstance

VERTICAL = 0  # line of constant x
HORIZONTAL = 1  # line of constant y


def _v2(n: int) -> int:
    """2-adic valuation; large for n = 0."""
    if n == 0:
        return 64
    return (n & -n).bit_length() - 1


@dataclass
class Dissection:
    L: int
    shift: tuple[int, int]
    m: int
    eps: float
    _portal_cache: dict = field(default_factory=dict, repr=False)

    @property
    def box_side(self) -> int:
        return 2 * self.L

    @property
    def depth(self) -> int:
        """Leaf depth: leaves are unit cells."""
        return int(math.log2(self.box_side))

    def side_at(self, level: int) -> int:
        return self.box_side >> level

    def line_level(self, u: int) -> int:
        """Level of the grid line with box offset u in [0, 2L]."""
        if not (0 <= u <= self.box_side):
            raise ValueError(f"line offset {u} outside box")
        return max(0, self.depth - _v2(u))

    def formula_portals(self, u: int) -> list[tuple[int, float]]:
        """(portal id, t position) of all formula portals on the line."""
        i = self.line_level(u)
        count = (1 << i) * self.m
        spacing = self.box_side / count
        margin = min(0.2, spacing / 4.0)
        out = []
        for p in range(count):
            t = (p + 0.5) * spacing
            frac = t - math.floor(t)
            if frac < margin:
                t = math.floor(t) + margin
            elif frac > 1.0 - margin:
                t = math.floor(t) + 1.0 - margin
            out.append((p, t))
        return out

    def chosen_portals(self, axis: int, u: int, m_cap: int, leaf_m: int) -> list[tuple[int, float]]:
        """Portals surviving the caps, for the whole line (sorted by t).

        Selection: per top-level edge extent keep an even subsample of at
        most m_cap; then per unit extent keep the leaf_m closest to the
        cell midpoint.  Purely a function of the line, so both sides of any
        edge see the same set.
        """
        key = (axis, u, m_cap, leaf_m)
        if key in self._portal_cache:
            return self._portal_cache[key]
        i = self.line_level(u)
        side = self.side_at(i)  # top-level edge extent length on this line
        portals = self.formula_portals(u)
        chosen: list[tuple[int, float]] = []
        n_ext = self.box_side // side
        for j in range(n_ext):
            lo, hi = j * side, (j + 1) * side
            ext = [pt for pt in portals if lo <= pt[1] < hi]
            if len(ext) > m_cap and m_cap > 0:
                idxs = [round(q * (len(ext) - 1) / (m_cap - 1)) for q in range(m_cap)] if m_cap > 1 else [len(ext) // 2]
                ext = [ext[q] for q in sorted(set(idxs))]
            chosen.extend(ext)
        # per-unit-cell truncation
        by_cell: dict[int, list[tuple[int, float]]] = {}
        for pid, t in chosen:
            by_cell.setdefault(int(t), []).append((pid, t))
        final: list[tuple[int, float]] = []
        for cell, items in sorted(by_cell.items()):
            if len(items) > leaf_m:
                mid = cell + 0.5
                items = sorted(items, key=lambda pt: (abs(pt[1] - mid), pt[0]))[:leaf_m]
            final.extend(items)
        final.sort(key=lambda pt: pt[1])
        self._portal_cache[key] = final
        return final

    def portals_in_extent(
        self, axis: int, u: int, lo: float, hi: float, m_cap: int, leaf_m: int
    ) -> list[tuple[int, float]]:
        return [pt for pt in self.chosen_portals(axis, u, m_cap, leaf_m) if lo < pt[1] < hi]

    # --- square helpers (box coordinates) ---

    def square_corner(self, level: int, ix: int, iy: int) -> tuple[int, int]:
        s = self.side_at(level)
        return (ix * s, iy * s)

    def to_grid(self, bx: float, by: float) -> tuple[float, float]:
        """Box coordinates -> snapped instance grid coordinates."""
        return (bx - self.shift[0], by - self.shift[1])

    def to_box(self, gx: float, gy: float) -> tuple[float, float]:
        return (gx + self.shift[0], gy + self.shift[1])


def build_dissection(
    pi: PerturbedInstance, eps: float, shift: tuple[int, int] | None = None, seed: int | None = None
) -> Dissection:
    """Quadtree dissection of the doubled box with portal parameter m.

    ``shift`` pins (a, b); otherwise they are drawn uniformly from
    [0, L-1]^2 with the given seed.
    """
    L = pi.grid_L
    if shift is None:
        rng = random.Random(seed)
        shift = (rng.randrange(L), rng.randrange(L))
    a, b = shift
    if not (0 <= a < L and 0 <= b < L):
        raise ValueError(f"shift {shift} outside [0,{L - 1}]^2")
    m = math.ceil(4 * math.log2(2 * L) / eps)
    return Dissection(L=L, shift=(a, b), m=m, eps=eps)


def portal_snapping_cost(d: Dissection, segments: list[tuple[tuple, tuple]]) -> float:
    """Cost of moving every grid-line crossing to its nearest formula portal.

    Segments are in snapped-grid coordinates; each crossing pays twice its
    distance to the closest portal on the crossed line (one connector on
    each side of the line).
    """
    total = 0.0
    a, b = d.shift
    for (x1, y1), (x2, y2) in segments:
        for axis in (VERTICAL, HORIZONTAL):
            if axis == VERTICAL:
                c1, c2, o1, o2, off_u, off_t = x1, x2, y1, y2, a, b
            else:
                c1, c2, o1, o2, off_u, off_t = y1, y2, x1, x2, b, a
            lo, hi = min(c1, c2), max(c1, c2)
            u_lo = math.ceil(lo + off_u)
            u_hi = math.floor(hi + off_u)
            for u in range(max(0, u_lo), min(d.box_side, u_hi) + 1):
                if abs(c2 - c1) < 1e-15:
                    continue
                frac = ((u - off_u) - c1) / (c2 - c1)
                if frac < 0.0 or frac > 1.0:
                    continue
                t = (o1 + frac * (o2 - o1)) + off_t
                portals = d.formula_portals(u)
                dist = min(abs(t - pt) for _, pt in portals)
                total += 2.0 * dist
    return total
