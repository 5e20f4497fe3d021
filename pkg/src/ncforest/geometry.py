"""Planar primitives, embedded tree/forest types, and the strict solution validator.

Coordinates are binary floats.  All predicates take a tolerance that callers
should derive from the instance scale (``Instance.tolerance`` gives the
standard 1e-9 * diameter value).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

TERMINAL = "terminal"
STEINER = "steiner"

LEFT = "left"
RIGHT = "right"
COLLINEAR = "collinear"

REL_TOL = 1e-9


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def dist(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def __iter__(self):
        yield self.x
        yield self.y


def _cross(a: Point, b: Point, c: Point) -> float:
    """Twice the signed area of triangle abc (positive = c left of a->b)."""
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)


def orientation(a: Point, b: Point, c: Point, tol: float = REL_TOL) -> str:
    """Classify c relative to the directed line a->b.

    Returns one of LEFT, RIGHT, COLLINEAR.  The collinearity band is
    ``tol * scale**2`` where scale is the largest coordinate magnitude
    involved, so the test is invariant under uniform scaling.
    """
    area2 = _cross(a, b, c)
    scale = max(abs(a.x), abs(a.y), abs(b.x), abs(b.y), abs(c.x), abs(c.y), 1.0)
    if abs(area2) <= tol * scale * scale:
        return COLLINEAR
    return LEFT if area2 > 0 else RIGHT


def _points_coincide(p: Point, q: Point, tol: float) -> bool:
    return p.dist(q) <= tol


def _point_in_segment_interior(p: Point, a: Point, b: Point, tol: float) -> bool:
    """True iff p lies on segment ab, strictly away from both endpoints.

    The collinearity band scales with the segment length (distance of p to
    the supporting line at most tol * scale), which keeps the test sound for
    very short segments.
    """
    scale = max(abs(a.x), abs(a.y), abs(b.x), abs(b.y), abs(p.x), abs(p.y), 1.0)
    if abs(_cross(a, b, p)) > tol * scale * a.dist(b):
        return False
    # projection parameter onto ab
    abx, aby = b.x - a.x, b.y - a.y
    den = abx * abx + aby * aby
    if den == 0.0:
        return False
    t = ((p.x - a.x) * abx + (p.y - a.y) * aby) / den
    seg_len = math.sqrt(den)
    eps = tol * max(scale, 1.0) / seg_len if seg_len > 0 else 0.0
    return eps < t < 1.0 - eps and not (
        _points_coincide(p, a, tol * scale) or _points_coincide(p, b, tol * scale)
    )


Segment = tuple[Point, Point]


def segments_cross(s1: Segment, s2: Segment, tol: float = REL_TOL) -> bool:
    """Strict crossing test between two segments.

    True iff the interiors intersect, an endpoint of one segment lies in the
    interior of the other, or the segments overlap collinearly over positive
    length.  Sharing only endpoints is not a crossing.  Raises ValueError on
    zero-length segments.
    """
    a, b = s1
    c, d = s2
    scale = max(
        abs(a.x), abs(a.y), abs(b.x), abs(b.y), abs(c.x), abs(c.y), abs(d.x), abs(d.y), 1.0
    )
    abs_tol = tol * scale
    if a.dist(b) <= abs_tol or c.dist(d) <= abs_tol:
        raise ValueError("segments_cross: degenerate (zero-length) segment")

    # bands scale with the base segment length: |cross| / |base| is the
    # distance to the supporting line, compared against tol * scale
    band_ab = tol * scale * a.dist(b)
    band_cd = tol * scale * c.dist(d)
    o1 = _cross(a, b, c)
    o2 = _cross(a, b, d)
    o3 = _cross(c, d, a)
    o4 = _cross(c, d, b)
    col1 = abs(o1) <= band_ab
    col2 = abs(o2) <= band_ab
    col3 = abs(o3) <= band_cd
    col4 = abs(o4) <= band_cd

    if not (col1 or col2 or col3 or col4):
        # proper, non-degenerate configuration
        return (o1 > 0) != (o2 > 0) and (o3 > 0) != (o4 > 0)

    if col1 and col2:
        # collinear segments: crossing iff overlap has positive length
        if abs(b.x - a.x) >= abs(b.y - a.y):
            key = lambda p: p.x
        else:
            key = lambda p: p.y
        lo1, hi1 = sorted((key(a), key(b)))
        lo2, hi2 = sorted((key(c), key(d)))
        return min(hi1, hi2) - max(lo1, lo2) > abs_tol

    # touching configurations: a crossing iff some endpoint is interior
    # to the other segment
    for p, (u, v) in ((c, (a, b)), (d, (a, b)), (a, (c, d)), (b, (c, d))):
        if _point_in_segment_interior(p, u, v, tol):
            return True
    return False


@dataclass(frozen=True)
class Instance:
    """A k-colored terminal set.

    Same-color duplicate points are collapsed at construction.  Terminals of
    different colors must not coincide and every color class must be
    non-empty.
    """

    terminals: tuple[tuple[Point, int], ...]
    k: int
    diameter: float
    metadata: dict = field(default_factory=dict)

    @staticmethod
    def build(
        terminals: Iterable[tuple[Point, int]], k: int, metadata: Optional[dict] = None
    ) -> "Instance":
        if k < 1:
            raise ValueError("instance needs k >= 1")
        seen: dict[tuple[float, float, int], None] = {}
        cleaned: list[tuple[Point, int]] = []
        for p, c in terminals:
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise ValueError(f"non-finite coordinate {p}")
            if not (0 <= c < k):
                raise ValueError(f"color {c} outside [0,{k})")
            key = (p.x, p.y, c)
            if key in seen:
                continue
            seen[key] = None
            cleaned.append((p, c))
        if not cleaned:
            raise ValueError("instance has no terminals")
        colors = {c for _, c in cleaned}
        if colors != set(range(k)):
            raise ValueError(f"every color in [0,{k}) needs a terminal, got {sorted(colors)}")

        xs = [p.x for p, _ in cleaned]
        ys = [p.y for p, _ in cleaned]
        diam = math.hypot(max(xs) - min(xs), max(ys) - min(ys))
        tol = REL_TOL * max(diam, 1.0)
        by_pos: dict[tuple[float, float], int] = {}
        for p, c in cleaned:
            for (qx, qy), c2 in by_pos.items():
                if c2 != c and math.hypot(p.x - qx, p.y - qy) <= tol:
                    raise ValueError(f"terminals of colors {c2} and {c} coincide at {p}")
            by_pos[(p.x, p.y)] = c
        return Instance(tuple(cleaned), k, diam, metadata or {})

    @property
    def n(self) -> int:
        return len(self.terminals)

    @property
    def tolerance(self) -> float:
        return REL_TOL * max(self.diameter, 1.0)

    def color_points(self, color: int) -> list[Point]:
        return [p for p, c in self.terminals if c == color]

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [p.x for p, _ in self.terminals]
        ys = [p.y for p, _ in self.terminals]
        return (min(xs), min(ys), max(xs), max(ys))


@dataclass
class PlaneTree:
    """One embedded tree: straight segments between indexed vertices.

    Polyline bends are encoded as degree-2 steiner vertices.
    """

    color: int
    vertices: list[tuple[Point, str]]
    edges: list[tuple[int, int]]

    @staticmethod
    def single_point(color: int, p: Point) -> "PlaneTree":
        return PlaneTree(color, [(p, TERMINAL)], [])

    def vertex_points(self) -> list[Point]:
        return [p for p, _ in self.vertices]

    def terminal_points(self) -> list[Point]:
        return [p for p, kind in self.vertices if kind == TERMINAL]

    def segments(self) -> list[Segment]:
        pts = self.vertices
        return [(pts[i][0], pts[j][0]) for i, j in self.edges]

    def degree(self, idx: int) -> int:
        return sum(1 for i, j in self.edges if i == idx or j == idx)


def total_length(t: PlaneTree) -> float:
    """Sum of Euclidean edge lengths."""
    return sum(a.dist(b) for a, b in t.segments())


@dataclass
class Forest:
    """One tree per color plus provenance of the producing run."""

    trees: list[PlaneTree]
    provenance: dict = field(default_factory=dict)

    def tree_for(self, color: int) -> PlaneTree:
        for t in self.trees:
            if t.color == color:
                return t
        raise KeyError(f"no tree for color {color}")

    def total_length(self) -> float:
        return sum(total_length(t) for t in self.trees)


@dataclass
class CertificateEntry:
    inequality: str
    lhs: float
    rhs: float
    slack: float

    def holds(self, tol: float = 1e-9) -> bool:
        return self.lhs <= self.rhs + self.slack + tol


@dataclass
class SolutionReport:
    per_color_length: list[float]
    total_length: float
    lower_bound: float = 0.0
    certificate: list[CertificateEntry] = field(default_factory=list)
    portal_pass_histogram: Optional[list[int]] = None
    details: dict = field(default_factory=dict)

    def certificate_ok(self, tol: float = 1e-9) -> bool:
        return all(e.holds(tol) for e in self.certificate)


@dataclass
class Violation:
    code: str
    message: str


def _tree_violations(tree: PlaneTree, inst: Instance, tol: float) -> list[Violation]:
    out: list[Violation] = []
    pts = tree.vertices
    n = len(pts)
    for i, j in tree.edges:
        if i == j or not (0 <= i < n and 0 <= j < n):
            out.append(Violation("bad_edge", f"color {tree.color}: edge ({i},{j}) malformed"))
            return out
        if pts[i][0].dist(pts[j][0]) <= tol:
            out.append(
                Violation("degenerate_edge", f"color {tree.color}: edge ({i},{j}) has zero length")
            )

    # connectivity + acyclicity via union-find
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    cyclic = False
    for i, j in tree.edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            cyclic = True
        else:
            parent[ri] = rj
    if cyclic:
        out.append(Violation("cycle", f"color {tree.color}: edge graph contains a cycle"))
    if n > 1:
        roots = {find(i) for i in range(n)}
        if len(roots) > 1:
            out.append(Violation("disconnected", f"color {tree.color}: tree is not connected"))

    for idx, (p, kind) in enumerate(pts):
        if kind == STEINER and tree.degree(idx) == 0:
            out.append(
                Violation("isolated_steiner", f"color {tree.color}: steiner vertex {idx} unused")
            )

    # terminal cover: tree's terminal vertices == instance terminals of its color
    want = inst.color_points(tree.color)
    have = tree.terminal_points()
    for w in want:
        if not any(_points_coincide(w, h, tol) for h in have):
            out.append(
                Violation("missing_terminal", f"color {tree.color}: terminal {w.xy} not spanned")
            )
    for h in have:
        if not any(_points_coincide(w, h, tol) for w in want):
            out.append(
                Violation(
                    "foreign_terminal",
                    f"color {tree.color}: vertex {h.xy} marked terminal but not in instance",
                )
            )
    return out


def forest_validate(f: Forest, inst: Instance):
    """Validate a forest against its instance.

    Returns a SolutionReport on success, otherwise a non-empty list of
    Violation records.  Checks: per-color terminal cover, per-tree
    connectivity/acyclicity, pairwise non-crossing between trees, and no edge
    of one tree through a vertex of another.
    """
    tol = inst.tolerance
    violations: list[Violation] = []

    colors_seen = sorted(t.color for t in f.trees)
    if colors_seen != list(range(inst.k)):
        violations.append(
            Violation("tree_set", f"expected one tree per color 0..{inst.k - 1}, got {colors_seen}")
        )
        return violations

    for t in f.trees:
        violations.extend(_tree_violations(t, inst, tol))

    trees = [f.tree_for(c) for c in range(inst.k)]
    seglists = [t.segments() for t in trees]
    for c1 in range(inst.k):
        for c2 in range(c1 + 1, inst.k):
            for s1 in seglists[c1]:
                if s1[0].dist(s1[1]) <= tol:
                    continue
                for s2 in seglists[c2]:
                    if s2[0].dist(s2[1]) <= tol:
                        continue
                    if segments_cross(s1, s2, REL_TOL):
                        violations.append(
                            Violation(
                                "crossing",
                                f"colors {c1}/{c2}: edges {s1[0].xy}-{s1[1].xy} and "
                                f"{s2[0].xy}-{s2[1].xy} cross",
                            )
                        )
    # edge of one tree through a vertex of another
    for c1 in range(inst.k):
        for c2 in range(inst.k):
            if c1 == c2:
                continue
            for v, _kind in trees[c2].vertices:
                for a, b in seglists[c1]:
                    if a.dist(b) <= tol:
                        continue
                    if _point_in_segment_interior(v, a, b, REL_TOL):
                        violations.append(
                            Violation(
                                "vertex_on_edge",
                                f"color {c1} edge {a.xy}-{b.xy} passes through color {c2} "
                                f"vertex {v.xy}",
                            )
                        )
    if violations:
        return violations

    per_color = [total_length(trees[c]) for c in range(inst.k)]
    return SolutionReport(per_color_length=per_color, total_length=sum(per_color))


def is_valid(f: Forest, inst: Instance) -> bool:
    return isinstance(forest_validate(f, inst), SolutionReport)
