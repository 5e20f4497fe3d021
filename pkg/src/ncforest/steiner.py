"""Single-color Steiner tree subroutines.

Exact trees for up to three points (segment / Fermat star), a minimum
spanning tree baseline, and a local-improvement heuristic for larger sets.
The heuristic starts from the MST and only ever applies improving moves, so
its length never exceeds the MST length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree as _sparse_mst

from .geometry import Point, PlaneTree, STEINER, TERMINAL, total_length

# relative improvement below which the local search stops
_IMPROVE_EPS = 1e-7
# cited upper bound on the Steiner ratio (MST length / Steiner tree length)
STEINER_RATIO_BOUND = 1.21


@dataclass
class SteinerResult:
    tree: PlaneTree
    method: str
    length: float


def _unique_points(points: list[Point]) -> list[Point]:
    seen: set[tuple[float, float]] = set()
    out = []
    for p in points:
        if p.xy not in seen:
            seen.add(p.xy)
            out.append(p)
    return out


def euclidean_mst(points: list[Point], color: int = 0) -> PlaneTree:
    """Minimum spanning tree of the points, no steiner vertices.

    Exact duplicates are collapsed so the edge graph stays simple.
    """
    if not points:
        raise ValueError("euclidean_mst needs at least one point")
    pts = _unique_points(points)
    n = len(pts)
    vertices = [(p, TERMINAL) for p in pts]
    if n == 1:
        return PlaneTree(color, vertices, [])
    coords = np.array([[p.x, p.y] for p in pts])
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    # csgraph treats zeros as missing edges; distinct points keep dist > 0
    mst = _sparse_mst(dist)
    edges = [(int(i), int(j)) for i, j in zip(*mst.nonzero())]
    return PlaneTree(color, vertices, edges)


def _angle_at(v: Point, u: Point, w: Point) -> float:
    """Angle u-v-w in radians."""
    ax, ay = u.x - v.x, u.y - v.y
    bx, by = w.x - v.x, w.y - v.y
    na = math.hypot(ax, ay)
    nb = math.hypot(bx, by)
    if na == 0 or nb == 0:
        return 0.0
    cosv = max(-1.0, min(1.0, (ax * bx + ay * by) / (na * nb)))
    return math.acos(cosv)


def _rotate(p: Point, about: Point, angle: float) -> Point:
    c, s = math.cos(angle), math.sin(angle)
    dx, dy = p.x - about.x, p.y - about.y
    return Point(about.x + c * dx - s * dy, about.y + s * dx + c * dy)


def _line_intersection(a1: Point, a2: Point, b1: Point, b2: Point) -> Point | None:
    d1x, d1y = a2.x - a1.x, a2.y - a1.y
    d2x, d2y = b2.x - b1.x, b2.y - b1.y
    den = d1x * d2y - d1y * d2x
    if den == 0:
        return None
    t = ((b1.x - a1.x) * d2y - (b1.y - a1.y) * d2x) / den
    return Point(a1.x + t * d1x, a1.y + t * d1y)


def fermat_point(a: Point, b: Point, c: Point) -> Point | None:
    """Fermat point of triangle abc, or None when some angle is >= 120 degrees.

    Uses the classical construction: lines from each corner to the apex of the
    equilateral triangle erected outward on the opposite side.
    """
    for v, u, w in ((a, b, c), (b, a, c), (c, a, b)):
        if _angle_at(v, u, w) >= 2 * math.pi / 3 - 1e-12:
            return None

    def outward_apex(p: Point, q: Point, opposite: Point) -> Point:
        cand1 = _rotate(q, p, math.pi / 3)
        cand2 = _rotate(q, p, -math.pi / 3)
        return cand1 if cand1.dist(opposite) >= cand2.dist(opposite) else cand2

    apex_a = outward_apex(b, c, a)
    apex_b = outward_apex(a, c, b)
    f = _line_intersection(a, apex_a, b, apex_b)
    return f


def _tri_steiner(a: Point, b: Point, c: Point) -> tuple[Point | None, float]:
    """Optimal 3-point Steiner topology: (hub, length). hub None = star at Fermat point."""
    f = fermat_point(a, b, c)
    if f is not None:
        return f, f.dist(a) + f.dist(b) + f.dist(c)
    # wide angle: best tree is the two edges at the wide-angle corner
    best = None
    for v, u, w in ((a, b, c), (b, a, c), (c, a, b)):
        L = v.dist(u) + v.dist(w)
        if best is None or L < best[1]:
            best = (v, L)
    return best  # type: ignore[return-value]


def _improve_mst(tree: PlaneTree) -> PlaneTree:
    """Local Steiner-point insertion at corners tighter than 120 degrees."""
    vertices = list(tree.vertices)
    edges = set(tuple(sorted(e)) for e in tree.edges)

    def neighbors(idx: int) -> list[int]:
        out = []
        for i, j in edges:
            if i == idx:
                out.append(j)
            elif j == idx:
                out.append(i)
        return out

    while True:
        cur_len = sum(vertices[i][0].dist(vertices[j][0]) for i, j in edges)
        best_gain = _IMPROVE_EPS * max(cur_len, 1e-30)
        best = None
        for v_idx in range(len(vertices)):
            nbrs = sorted(neighbors(v_idx))
            for ai in range(len(nbrs)):
                for bi in range(ai + 1, len(nbrs)):
                    u_idx, w_idx = nbrs[ai], nbrs[bi]
                    v, u, w = vertices[v_idx][0], vertices[u_idx][0], vertices[w_idx][0]
                    if _angle_at(v, u, w) >= 2 * math.pi / 3:
                        continue
                    hub, star_len = _tri_steiner(u, v, w)
                    if hub is None:
                        continue
                    old = v.dist(u) + v.dist(w)
                    gain = old - star_len
                    if gain > best_gain:
                        best_gain = gain
                        best = (v_idx, u_idx, w_idx, hub)
        if best is None:
            break
        v_idx, u_idx, w_idx, hub = best
        edges.discard(tuple(sorted((v_idx, u_idx))))
        edges.discard(tuple(sorted((v_idx, w_idx))))
        s_idx = len(vertices)
        vertices.append((hub, STEINER))
        edges.add(tuple(sorted((s_idx, u_idx))))
        edges.add(tuple(sorted((s_idx, w_idx))))
        edges.add(tuple(sorted((s_idx, v_idx))))
    return PlaneTree(tree.color, vertices, sorted(edges))


def steiner_tree(
    points: list[Point], quality: str = "auto", color: int = 0, eps: float = 0.5
) -> SteinerResult:
    """Steiner tree of the points: exact for <= 3 points, heuristic beyond.

    quality "auto" picks the method by point count; "ptas" additionally runs
    the quadtree dynamic program with a single color and keeps the shorter of
    the two results.
    """
    if not points:
        raise ValueError("steiner_tree needs at least one point")
    pts = _unique_points(points)
    n = len(pts)
    if n == 1:
        tree = PlaneTree(color, [(pts[0], TERMINAL)], [])
        return SteinerResult(tree, "exact2", 0.0)
    if n == 2:
        tree = PlaneTree(color, [(pts[0], TERMINAL), (pts[1], TERMINAL)], [(0, 1)])
        return SteinerResult(tree, "exact2", total_length(tree))
    if n == 3:
        a, b, c = pts
        hub, _ = _tri_steiner(a, b, c)
        if hub is not None and all(hub.dist(p) > 0 for p in pts):
            tree = PlaneTree(
                color,
                [(a, TERMINAL), (b, TERMINAL), (c, TERMINAL), (hub, STEINER)],
                [(0, 3), (1, 3), (2, 3)],
            )
            method = "fermat3"
        else:
            corner = hub if hub is not None else a
            idx = pts.index(corner) if corner in pts else 0
            others = [i for i in range(3) if i != idx]
            tree = PlaneTree(
                color,
                [(p, TERMINAL) for p in pts],
                [(idx, others[0]), (idx, others[1])],
            )
            method = "fermat3"
        return SteinerResult(tree, method, total_length(tree))

    mst = euclidean_mst(pts, color)
    tree = _improve_mst(mst)
    result = SteinerResult(tree, "heuristic", total_length(tree))
    if quality == "ptas":
        dp_result = _ptas_single_color(pts, color, eps)
        if dp_result is not None and dp_result.length < result.length:
            return dp_result
    return result


def _ptas_single_color(pts: list[Point], color: int, eps: float) -> SteinerResult | None:
    """Route through the quadtree DP engine with one color."""
    from .geometry import Instance
    from .quadtree.pipelines import solve_single_color_dp

    try:
        inst = Instance.build([(p, 0) for p in pts], 1)
        forest, _report = solve_single_color_dp(inst, eps)
    except Exception:
        return None
    tree = forest.trees[0]
    tree = PlaneTree(color, tree.vertices, tree.edges)
    return SteinerResult(tree, "dp_ptas", total_length(tree))


def steiner_subtree_prune(t: PlaneTree, keep: list[Point], tol: float = 1e-9) -> PlaneTree:
    """Minimal subtree of t spanning the kept terminals.

    Iteratively strips leaves that are not kept points; the result is the
    union of tree paths between kept terminals.
    """
    if not keep:
        raise ValueError("steiner_subtree_prune: keep must be non-empty")
    scale = max((max(abs(p.x), abs(p.y)) for p, _ in t.vertices), default=1.0)
    abs_tol = tol * max(scale, 1.0)

    keep_idx: set[int] = set()
    for kp in keep:
        found = None
        for idx, (p, _kind) in enumerate(t.vertices):
            if p.dist(kp) <= abs_tol:
                found = idx
                break
        if found is None:
            raise ValueError(f"keep point {kp.xy} is not a vertex of the tree")
        keep_idx.add(found)

    alive = set(range(len(t.vertices)))
    edges = set(tuple(sorted(e)) for e in t.edges)
    changed = True
    while changed:
        changed = False
        deg: dict[int, int] = {i: 0 for i in alive}
        for i, j in edges:
            deg[i] += 1
            deg[j] += 1
        for v in sorted(alive):
            if v in keep_idx:
                continue
            if deg.get(v, 0) <= 1:
                alive.discard(v)
                edges = {e for e in edges if v not in e}
                changed = True

    remap = {old: new for new, old in enumerate(sorted(alive))}
    vertices = [t.vertices[old] for old in sorted(alive)]
    new_edges = sorted((remap[i], remap[j]) for i, j in edges)
    return PlaneTree(t.color, vertices, new_edges)
