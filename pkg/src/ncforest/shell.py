"""Shell constructions: offset outlines, crossing-free rerouting, layered rings.

The zero-width shells of the underlying bounds are realized at a finite
offset delta; every operation reports the extra length this costs (the
"slack"), which vanishes as delta goes to zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from shapely.geometry import LineString, MultiLineString, Point as ShPoint, Polygon
from shapely.ops import substring, unary_union

from .errors import ShellError
from .geometry import Point, PlaneTree, STEINER, TERMINAL, segments_cross, total_length

# perimeter overhead of a round offset at distance d is at most 2*pi*d
OUTLINE_SLACK_COEFF = 2 * math.pi


@dataclass(frozen=True)
class ShellParams:
    delta: float
    max_refine: int = 8

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("shell delta must be positive")

    @staticmethod
    def for_instance(inst, frac: float = 1e-4) -> "ShellParams":
        return ShellParams(delta=frac * max(inst.diameter, 1e-9))

    @property
    def quad_segs(self) -> int:
        return max(2, min(self.max_refine, 16))


def _tree_geometry(trees) -> "object":
    """Shapely geometry of one tree or a list of trees."""
    if isinstance(trees, PlaneTree):
        trees = [trees]
    parts = []
    for t in trees:
        segs = [LineString([a.xy, b.xy]) for a, b in t.segments() if a.dist(b) > 0]
        if segs:
            parts.extend(segs)
        else:
            parts.extend(ShPoint(p.xy) for p, _ in t.vertices)
    if not parts:
        raise ShellError("cannot outline an empty tree")
    return unary_union(parts)


def _outline_polygon(geom, offset: float, quad_segs: int) -> Polygon:
    region = geom.buffer(offset, quad_segs=quad_segs)
    if region.geom_type == "MultiPolygon":
        # disconnected input; callers pass connected trees, so this signals
        # an offset far too large or a broken tree
        raise ShellError("outline is not a single region; use a smaller delta")
    if not region.is_valid or region.is_empty:
        raise ShellError("outline construction failed; use a smaller delta")
    return region


def tree_outline(t: PlaneTree, p: ShellParams) -> list[Point]:
    """Simple closed polyline at distance <= delta around the tree.

    Length is at most 2|t| + OUTLINE_SLACK_COEFF * delta (round joins only
    ever add one full turn).  Returned without the repeated closing point.
    """
    region = _outline_polygon(_tree_geometry(t), p.delta, p.quad_segs)
    coords = list(region.exterior.coords)[:-1]
    return [Point(x, y) for x, y in coords]


def outline_slack_bound(p: ShellParams, offset_multiple: float = 1.0) -> float:
    return OUTLINE_SLACK_COEFF * p.delta * offset_multiple


class _GraphBuilder:
    """Accumulates weighted polyline edges between snapped nodes."""

    def __init__(self, snap: float):
        self.snap = max(snap, 1e-15)
        self._nodes: dict[tuple[int, int], tuple[float, float]] = {}
        self.edges: list[tuple[float, tuple, tuple, list[tuple[float, float]]]] = []

    def node(self, x: float, y: float) -> tuple:
        key = (round(x / self.snap), round(y / self.snap))
        if key not in self._nodes:
            self._nodes[key] = (x, y)
        return key

    def coords(self, key: tuple) -> tuple[float, float]:
        return self._nodes[key]

    def add_path(self, coords: list[tuple[float, float]]):
        if len(coords) < 2:
            return
        a = self.node(*coords[0])
        b = self.node(*coords[-1])
        if a == b:
            return
        length = LineString(coords).length
        self.edges.append((length, a, b, list(coords)))


def _spanning_prune(builder: _GraphBuilder, required: set[tuple]) -> list[list[tuple[float, float]]]:
    """Kruskal spanning tree over the builder graph, pruned to required nodes."""
    parent: dict[tuple, tuple] = {}

    def find(x):
        parent.setdefault(x, x)
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    chosen = []
    for length, a, b, coords in sorted(builder.edges, key=lambda e: (e[0], e[1], e[2])):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            chosen.append((a, b, coords))

    roots = {find(r) for r in required}
    if len(roots) > 1:
        raise ShellError("reroute graph is disconnected; use a smaller delta")

    # prune leaves that are not required
    adj: dict[tuple, list[int]] = {}
    for idx, (a, b, _) in enumerate(chosen):
        adj.setdefault(a, []).append(idx)
        adj.setdefault(b, []).append(idx)
    alive = [True] * len(chosen)
    changed = True
    while changed:
        changed = False
        deg: dict[tuple, int] = {}
        for idx, (a, b, _) in enumerate(chosen):
            if not alive[idx]:
                continue
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        for idx, (a, b, _) in enumerate(chosen):
            if not alive[idx]:
                continue
            for endpoint in (a, b):
                if deg.get(endpoint, 0) == 1 and endpoint not in required:
                    alive[idx] = False
                    changed = True
                    break
    return [coords for idx, (_, _, coords) in enumerate(chosen) if alive[idx]]


def _paths_to_tree(
    color: int, paths: list[list[tuple[float, float]]], terminals: list[Point], snap: float
) -> PlaneTree:
    """Assemble polyline paths into a PlaneTree, merging snapped vertices."""
    index: dict[tuple[int, int], int] = {}
    vertices: list[tuple[Point, str]] = []
    edges: set[tuple[int, int]] = set()

    term_keys = {(round(t.x / snap), round(t.y / snap)) for t in terminals}

    def vid(x: float, y: float) -> int:
        key = (round(x / snap), round(y / snap))
        if key not in index:
            kind = TERMINAL if key in term_keys else STEINER
            index[key] = len(vertices)
            vertices.append((Point(x, y), kind))
        return index[key]

    for coords in paths:
        prev = vid(*coords[0])
        for x, y in coords[1:]:
            cur = vid(x, y)
            if cur != prev:
                edges.add(tuple(sorted((prev, cur))))
            prev = cur
    for t in terminals:
        vid(t.x, t.y)
    return PlaneTree(color, vertices, sorted(edges))


@dataclass
class RerouteResult:
    tree: PlaneTree
    crossed: bool
    outline_length: float = 0.0
    slack: float = 0.0


def _trees_cross(r: PlaneTree, b: PlaneTree, tol: float) -> bool:
    for s1 in r.segments():
        if s1[0].dist(s1[1]) <= tol:
            continue
        for s2 in b.segments():
            if s2[0].dist(s2[1]) <= tol:
                continue
            if segments_cross(s1, s2):
                return True
    return False


def trees_cross(r: PlaneTree, b) -> bool:
    """True iff any edge of r crosses any edge of the obstacle tree(s)."""
    obstacles = [b] if isinstance(b, PlaneTree) else list(b)
    scale = max(
        1.0,
        *(max(abs(pt.x), abs(pt.y)) for t in [r, *obstacles] for pt, _ in t.vertices),
    )
    tol = 1e-9 * scale
    return any(_trees_cross(r, t, tol) for t in obstacles)


def shell_reroute(
    r: PlaneTree, b, p: ShellParams, min_clearance: float = 0.0
) -> RerouteResult:
    """Reroute r around the obstacle tree(s) b so they no longer cross.

    The new tree uses r's pieces outside the delta-outline of b plus arcs of
    that outline, then drops redundant arcs (cheapest spanning structure).
    Certified: |r'| <= |r| + 2|b| + slack where slack = outline length - 2|b|
    (clipped at zero) and vanishes with delta.

    With ``min_clearance`` > 0 the reroute also triggers when r merely comes
    that close to b, not only on proper crossings.
    """
    obstacles = [b] if isinstance(b, PlaneTree) else list(b)
    scale = max(
        1.0,
        *(max(abs(pt.x), abs(pt.y)) for t in [r, *obstacles] for pt, _ in t.vertices),
    )
    tol = 1e-9 * scale
    b_geom = _tree_geometry(obstacles)
    if not any(_trees_cross(r, t, tol) for t in obstacles):
        if min_clearance <= 0:
            return RerouteResult(tree=r, crossed=False)
        if b_geom.distance(_tree_geometry(r)) > min_clearance:
            return RerouteResult(tree=r, crossed=False)

    terminals = r.terminal_points()
    for t in terminals:
        if b_geom.distance(ShPoint(t.xy)) <= p.delta * 1.0001:
            raise ShellError(
                f"terminal {t.xy} lies within delta of the other tree; use a smaller delta"
            )

    region = b_geom.buffer(p.delta, quad_segs=p.quad_segs)
    if not region.is_valid or region.is_empty:
        raise ShellError("outline construction failed; use a smaller delta")
    tree, outline_len = _reroute_outside_region(r, region, terminals, p.delta, scale)
    obstacle_len = sum(total_length(t) for t in obstacles)
    slack = max(0.0, outline_len - 2.0 * obstacle_len)
    return RerouteResult(tree=tree, crossed=True, outline_length=outline_len, slack=slack)


def _reroute_outside_region(
    r: PlaneTree, region, terminals: list[Point], delta: float, scale: float
) -> tuple[PlaneTree, float]:
    """Replace r's geometry inside the region by arcs of the region boundary.

    The region may be a Polygon or MultiPolygon; all exterior and interior
    rings serve as detour arcs.
    """
    tol = 1e-9 * scale
    polys = list(region.geoms) if region.geom_type == "MultiPolygon" else [region]
    rings = []
    for poly in polys:
        rings.append(LineString(poly.exterior.coords))
        for interior in poly.interiors:
            rings.append(LineString(interior.coords))
    outline_len = sum(ring.length for ring in rings)

    # coarse enough to swallow sliver arcs from near-coincident split points
    snap = max(delta * 1e-3, 1e-12 * scale)
    builder = _GraphBuilder(snap)

    # r pieces outside the region
    for a, c in r.segments():
        if a.dist(c) <= tol:
            continue
        seg = LineString([a.xy, c.xy])
        outside = seg.difference(region)
        if outside.is_empty:
            continue
        pieces = outside.geoms if outside.geom_type == "MultiLineString" else [outside]
        for piece in pieces:
            builder.add_path(list(piece.coords))

    piece_nodes = [builder.coords(key) for _, a, bnode, _ in list(builder.edges) for key in (a, bnode)]
    for ring in rings:
        # arcs split at the points where r pieces touch this ring
        params = {0.0, ring.length}
        for x, y in piece_nodes:
            pt = ShPoint(x, y)
            if ring.distance(pt) <= delta * 1e-3:
                params.add(ring.project(pt))
        ordered = sorted(params)
        for d1, d2 in zip(ordered, ordered[1:]):
            if d2 - d1 <= snap:
                continue
            arc = substring(ring, d1, d2)
            builder.add_path(list(arc.coords))

    required = {builder.node(t.x, t.y) for t in terminals}
    paths = _spanning_prune(builder, required)
    tree = _paths_to_tree(r.color, paths, terminals, snap)
    return tree, outline_len


def excise_disk(tree: PlaneTree, center: Point, radius: float, p: ShellParams) -> PlaneTree:
    """Remove all of the tree's geometry inside a disk, reconnecting along its rim.

    The disk center may be a vertex of the tree (it is dropped).  Terminals
    other than the center must stay clear of the disk.
    """
    scale = max(1.0, *(max(abs(pt.x), abs(pt.y)) for pt, _ in tree.vertices))
    keep = [t for t in tree.terminal_points() if t.dist(center) > radius]
    for t in keep:
        if t.dist(center) <= radius * 1.5:
            raise ShellError(
                f"terminal {t.xy} too close to the excision disk at {center.xy}"
            )
    region = ShPoint(center.xy).buffer(radius, quad_segs=p.quad_segs)
    new_tree, _ = _reroute_outside_region(tree, region, keep, radius, scale)
    return new_tree


@dataclass
class LayeredShellResult:
    tree: PlaneTree
    ring_length: float
    spike_total: float
    length_bound: float = 0.0


def layered_shell(
    core,
    through: list[Point],
    p: ShellParams,
    layer: int = 1,
    avoid_cut_near: float = 0.0,
) -> LayeredShellResult:
    """A cut-open ring at offset layer*delta around the core, spiked to points.

    ``core`` is a PlaneTree or list of PlaneTrees.  Every ``through`` point is
    joined to the ring by a straight spike to its nearest ring point; the ring
    is cut at the point farthest from the through points so the result is a
    tree.  Through points must lie outside the offset band around the core.
    """
    if layer < 1:
        raise ValueError("layer must be >= 1")
    offset = layer * p.delta
    geom = _tree_geometry(core)
    for t in through:
        if geom.distance(ShPoint(t.xy)) <= offset:
            raise ShellError(
                f"through point {t.xy} lies inside the layer-{layer} offset band"
            )
    region = _outline_polygon(geom, offset, p.quad_segs)
    ring = LineString(region.exterior.coords)
    ring_len = ring.length

    color = core.color if isinstance(core, PlaneTree) else core[0].color
    spikes: list[tuple[float, Point]] = []
    used_params: set[float] = set()
    for t in through:
        d = ring.project(ShPoint(t.xy))
        while any(abs(d - u) <= ring_len * 1e-9 for u in used_params):
            d = (d + ring_len * 1e-6) % ring_len
        used_params.add(d)
        spikes.append((d, t))

    # cut the ring where it is farthest from the through points
    cut_candidates = [0.0]
    acc = 0.0
    coords = list(ring.coords)
    for (x1, y1), (x2, y2) in zip(coords, coords[1:]):
        acc += math.hypot(x2 - x1, y2 - y1)
        cut_candidates.append(acc)
    if through:
        def min_dist(param):
            pt = ring.interpolate(param)
            return min(math.hypot(pt.x - t.x, pt.y - t.y) for t in through)

        cut = max(cut_candidates, key=lambda d: (min_dist(d), -d))
    else:
        cut = 0.0
    cut_eps = min(p.delta * 1e-2, ring_len * 1e-4)

    snap = max(p.delta * 1e-4, 1e-12)
    builder = _GraphBuilder(snap)
    split_params = sorted({(cut + cut_eps) % ring_len, (cut - cut_eps) % ring_len, *used_params})
    for d1, d2 in zip(split_params, split_params[1:]):
        lo, hi = (cut - cut_eps) % ring_len, (cut + cut_eps) % ring_len
        mid = (d1 + d2) / 2
        if lo < hi and lo < mid < hi:
            continue  # inside the cut gap
        builder.add_path(list(substring(ring, d1, d2).coords))
    # closing arc from last param back to first (through ring start)
    d_last, d_first = split_params[-1], split_params[0]
    lo, hi = (cut - cut_eps) % ring_len, (cut + cut_eps) % ring_len
    mid = ((d_last + d_first + ring_len) / 2) % ring_len
    in_gap = (lo < hi and lo < mid < hi) or (lo > hi and (mid > lo or mid < hi))
    if not in_gap:
        closing = list(substring(ring, d_last, ring_len).coords)
        closing += list(substring(ring, 0.0, d_first).coords)[1:]
        builder.add_path(closing)

    spike_total = 0.0
    for d, t in spikes:
        attach = ring.interpolate(d)
        builder.add_path([(t.x, t.y), (attach.x, attach.y)])
        spike_total += math.hypot(attach.x - t.x, attach.y - t.y)

    required = {builder.node(t.x, t.y) for _, t in spikes}
    if not required:
        if not builder.edges:
            raise ShellError("layered shell produced no geometry")
        required = {builder.edges[0][1], builder.edges[0][2]}
    paths = _spanning_prune(builder, required)
    tree = _paths_to_tree(color, paths, [t for _, t in spikes], snap)
    return LayeredShellResult(
        tree=tree, ring_length=ring_len, spike_total=spike_total, length_bound=ring_len + spike_total
    )
