"""Snapping instances to parity grids and lifting solutions back.

Each color owns a parity class of an L x L integer grid (even/even,
odd/odd, and even-row/odd-column for a third color), so snapped terminals
of different colors can never collide.  ``unperturb_solution`` carries a
solution on the snapped instance back to the original terminals: every
displaced terminal gets a straight stub to its tree, and foreign edges
crossing the stub are cut and rerouted along nested rails that wrap around
the terminal (the realization of the zero-width rerouting argument, with
same-color crossing runs merged into one rail).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import DecomposableInstanceError
from ..geometry import (
    Forest,
    Instance,
    PlaneTree,
    Point,
    STEINER,
    TERMINAL,
    total_length,
)

SQRT2 = math.sqrt(2)

# paper-derived factors for the grid interval [factor*n/eps, 2*factor*n/eps]
_INTERVAL_FACTOR = {1: 3 * SQRT2, 2: 3 * SQRT2, 3: 7 * SQRT2}

PARITY_MAP = {0: (0, 0), 1: (1, 1), 2: (0, 1)}  # color -> (row parity, col parity)


@dataclass
class PerturbedInstance:
    grid_L: int
    granularity: float
    origin: tuple[float, float]
    parity_map: dict[int, tuple[int, int]]
    snapped: Instance  # coordinates in grid units
    back_map: dict[int, tuple[int, int]]  # original terminal index -> grid point
    original: Instance
    formula_L: int
    l_capped: bool = False
    details: dict = field(default_factory=dict)

    def to_world(self, gx: float, gy: float) -> Point:
        return Point(self.origin[0] + gx * self.granularity, self.origin[1] + gy * self.granularity)


def _color_bbox_overlap_groups(inst: Instance) -> list[list[int]]:
    boxes = []
    for c in range(inst.k):
        pts = inst.color_points(c)
        boxes.append(
            (min(p.x for p in pts), min(p.y for p in pts), max(p.x for p in pts), max(p.y for p in pts))
        )

    def overlap(b1, b2):
        return not (b1[2] < b2[0] or b2[2] < b1[0] or b1[3] < b2[1] or b2[3] < b1[1])

    parent = list(range(inst.k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(inst.k):
        for j in range(i + 1, inst.k):
            if overlap(boxes[i], boxes[j]):
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for c in range(inst.k):
        groups.setdefault(find(c), []).append(c)
    return list(groups.values())


def _snap_parity(w: float, parity: int, L: int) -> int:
    """Nearest integer in [0, L] with the given parity."""
    v = 2 * round((w - parity) / 2) + parity
    lo = parity
    hi = L if (L - parity) % 2 == 0 else L - 1
    return int(min(hi, max(lo, v)))


def perturb_instance(
    inst: Instance, eps: float, colors: int, grid_cap: int | None = None
) -> PerturbedInstance:
    """Snap terminals to their color's parity class of an L x L grid.

    L is the power of two inside the prescribed interval for the color
    count; ``grid_cap`` truncates it for desk-scale runs (recorded via
    ``l_capped``, which voids the approximation certificate but not
    validity).  Raises DecomposableInstanceError when the color bounding
    boxes do not all overlap.
    """
    if colors not in (1, 2, 3):
        raise ValueError("perturbation supports 1, 2, or 3 colors")
    if inst.k != colors:
        raise ValueError(f"instance has {inst.k} colors, expected {colors}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if colors > 1:
        groups = _color_bbox_overlap_groups(inst)
        if len(groups) > 1:
            raise DecomposableInstanceError(groups)

    factor = _INTERVAL_FACTOR[colors]
    low = factor * inst.n / eps
    formula_L = max(4, 2 ** math.ceil(math.log2(low)))
    L = formula_L
    l_capped = False
    if grid_cap is not None and L > grid_cap:
        L = max(4, 2 ** math.floor(math.log2(grid_cap)))
        l_capped = True

    x0, y0, x1, y1 = inst.bbox()
    L0 = max(math.hypot(x1 - x0, y1 - y0), 1e-12)
    g = L0 / L

    snapped_terminals: list[tuple[Point, int]] = []
    back_map: dict[int, tuple[int, int]] = {}
    for idx, (p, c) in enumerate(inst.terminals):
        row_par, col_par = PARITY_MAP[c]
        gx = _snap_parity((p.x - x0) / g, col_par, L)
        gy = _snap_parity((p.y - y0) / g, row_par, L)
        back_map[idx] = (gx, gy)
        snapped_terminals.append((Point(float(gx), float(gy)), c))

    snapped = Instance.build(snapped_terminals, colors, metadata={"perturbed": True})
    return PerturbedInstance(
        grid_L=L,
        granularity=g,
        origin=(x0, y0),
        parity_map={c: PARITY_MAP[c] for c in range(colors)},
        snapped=snapped,
        back_map=back_map,
        original=inst,
        formula_L=formula_L,
        l_capped=l_capped,
    )


# ---------------------------------------------------------------------------
# lifting a snapped solution back to the original terminals


class _TreeGraph:
    """Mutable polyline-graph view of one tree, for cut/splice surgery."""

    def __init__(self, tree: PlaneTree, snap: float):
        self.color = tree.color
        self.snap = snap
        self._coords: dict[tuple[int, int], tuple[float, float]] = {}
        self.edges: set[tuple[tuple, tuple]] = set()
        self.terminals: set[tuple[int, int]] = set()
        for a, b in tree.segments():
            self.add_edge(a.xy, b.xy)
        for p, kind in tree.vertices:
            key = self.key(p.xy)
            self._coords.setdefault(key, p.xy)
            if kind == TERMINAL:
                self.terminals.add(key)

    def key(self, xy):
        return (round(xy[0] / self.snap), round(xy[1] / self.snap))

    def point(self, key) -> tuple[float, float]:
        return self._coords[key]

    def add_edge(self, a_xy, b_xy):
        ka, kb = self.key(a_xy), self.key(b_xy)
        self._coords.setdefault(ka, a_xy)
        self._coords.setdefault(kb, b_xy)
        if ka != kb:
            self.edges.add((min(ka, kb), max(ka, kb)))

    def remove_edge(self, a_xy, b_xy):
        ka, kb = self.key(a_xy), self.key(b_xy)
        self.edges.discard((min(ka, kb), max(ka, kb)))

    def split_edge_at(self, a_xy, b_xy, q_xy):
        self.remove_edge(a_xy, b_xy)
        self.add_edge(a_xy, q_xy)
        self.add_edge(q_xy, b_xy)

    def segment_list(self):
        return [(self.point(a), self.point(b)) for a, b in self.edges]

    def length(self, a, b):
        pa, pb = self.point(a), self.point(b)
        return math.hypot(pa[0] - pb[0], pa[1] - pb[1])

    def rebuild_spanning(self):
        """Drop cycle-closing edges (longest first) and prune bare leaves."""
        parent: dict[tuple, tuple] = {}

        def find(x):
            parent.setdefault(x, x)
            root = x
            while parent[root] != root:
                root = parent[root]
            while parent[x] != root:
                parent[x], x = root, parent[x]
            return root

        keep = []
        for a, b in sorted(self.edges, key=lambda e: (self.length(*e), e)):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
                keep.append((a, b))
        self.edges = set(keep)
        changed = True
        while changed:
            changed = False
            deg: dict[tuple, int] = {}
            for a, b in self.edges:
                deg[a] = deg.get(a, 0) + 1
                deg[b] = deg.get(b, 0) + 1
            for a, b in list(self.edges):
                for end in (a, b):
                    if deg.get(end, 0) == 1 and end not in self.terminals:
                        self.edges.discard((a, b))
                        changed = True
                        break

    def to_plane_tree(self) -> PlaneTree:
        used: dict[tuple, int] = {}
        vertices: list[tuple[Point, str]] = []

        def vid(key):
            if key not in used:
                xy = self.point(key)
                kind = TERMINAL if key in self.terminals else STEINER
                used[key] = len(vertices)
                vertices.append((Point(*xy), kind))
            return used[key]

        edges = sorted((vid(a), vid(b)) for a, b in self.edges)
        for t in self.terminals:
            vid(t)
        return PlaneTree(self.color, vertices, edges)


def _nearest_on_tree(graph: _TreeGraph, p: Point) -> tuple[tuple[float, float], object]:
    """Closest point on the tree: ((x, y), edge-or-None)."""
    best = None
    for a, b in list(graph.edges):
        pa, pb = graph.point(a), graph.point(b)
        abx, aby = pb[0] - pa[0], pb[1] - pa[1]
        den = abx * abx + aby * aby
        if den == 0:
            continue
        t = max(0.0, min(1.0, ((p.x - pa[0]) * abx + (p.y - pa[1]) * aby) / den))
        qx, qy = pa[0] + t * abx, pa[1] + t * aby
        d = math.hypot(p.x - qx, p.y - qy)
        if best is None or d < best[0]:
            edge = (pa, pb) if 0.0 < t < 1.0 else None
            best = (d, (qx, qy), edge)
    if best is None:
        # tree is a single point
        key = next(iter(graph.terminals))
        return graph.point(key), None
    return best[1], best[2]


def _segment_crossings(graphs, skip_color, v: Point, q: tuple[float, float], tol: float):
    """Foreign edges crossing the open segment v->q: (dist from v, color, edge)."""
    sx, sy = q[0] - v.x, q[1] - v.y
    s_len = math.hypot(sx, sy)
    out = []
    for g in graphs:
        if g.color == skip_color:
            continue
        for a, b in list(g.edges):
            pa, pb = g.point(a), g.point(b)
            d1x, d1y = sx, sy
            d2x, d2y = pb[0] - pa[0], pb[1] - pa[1]
            den = d1x * d2y - d1y * d2x
            if abs(den) < 1e-30:
                continue
            t = ((pa[0] - v.x) * d2y - (pa[1] - v.y) * d2x) / den
            u = ((pa[0] - v.x) * d1y - (pa[1] - v.y) * d1x) / den
            margin_t = tol / max(s_len, tol)
            edge_len = math.hypot(d2x, d2y)
            margin_u = tol / max(edge_len, tol)
            if margin_t < t < 1 - margin_t and margin_u < u < 1 - margin_u:
                out.append((t * s_len, g.color, (pa, pb), u))
    out.sort(key=lambda item: -item[0])
    return out


def _attach_terminal(graphs, color: int, v: Point, delta: float, tol: float) -> float:
    """Connect terminal v to its color tree, rerouting foreign crossings.

    Returns the total length added across all trees.
    """
    graph = next(g for g in graphs if g.color == color)
    q, split_edge = _nearest_on_tree(graph, v)
    s_len = math.hypot(v.x - q[0], v.y - q[1])
    if s_len <= tol:
        key = graph.key((v.x, v.y))
        graph._coords[key] = (v.x, v.y)
        graph.terminals.add(key)
        return 0.0

    crossings = _segment_crossings(graphs, color, v, q, tol)
    added = s_len

    # local frame along the stub
    ux, uy = (q[0] - v.x) / s_len, (q[1] - v.y) / s_len
    nx_, ny_ = -uy, ux

    def world(d, h):
        return (v.x + d * ux + h * nx_, v.y + d * uy + h * ny_)

    # merge same-color runs in far-to-near order: one rail per run
    runs: list[tuple[int, list[tuple[float, tuple, float]]]] = []
    for dist, ccol, edge, u in crossings:
        if runs and runs[-1][0] == ccol:
            runs[-1][1].append((dist, edge, u))
        else:
            runs.append((ccol, [(dist, edge, u)]))

    for rank, (ccol, members) in enumerate(runs):
        h = delta * (rank + 1)  # farthest run hugs the stub closest
        w = delta * (rank + 1)
        rail_graph = next(g for g in graphs if g.color == ccol)
        attach_above: list[tuple[float, tuple]] = []
        attach_below: list[tuple[float, tuple]] = []
        for dist, (pa, pb), u in members:
            # heights of the edge endpoints over the stub line
            ha = (pa[0] - v.x) * nx_ + (pa[1] - v.y) * ny_
            hb = (pb[0] - v.x) * nx_ + (pb[1] - v.y) * ny_
            if ha < hb:
                lo_pt, lo_h, hi_pt, hi_h = pa, ha, pb, hb
            else:
                lo_pt, lo_h, hi_pt, hi_h = pb, hb, pa, ha
            rail_graph.remove_edge(pa, pb)

            def trim(target_h, from_pt, from_h, to_pt, to_h):
                # point on the edge at signed height target_h
                frac = (target_h - from_h) / (to_h - from_h)
                frac = max(0.0, min(1.0, frac))
                return (
                    from_pt[0] + frac * (to_pt[0] - from_pt[0]),
                    from_pt[1] + frac * (to_pt[1] - from_pt[1]),
                )

            top_attach = trim(h, lo_pt, lo_h, hi_pt, hi_h)
            bot_attach = trim(-h, lo_pt, lo_h, hi_pt, hi_h)
            if hi_h > h:
                rail_graph.add_edge(top_attach, hi_pt)
            if lo_h < -h:
                rail_graph.add_edge(bot_attach, lo_pt)
            d_top = (top_attach[0] - v.x) * ux + (top_attach[1] - v.y) * uy
            d_bot = (bot_attach[0] - v.x) * ux + (bot_attach[1] - v.y) * uy
            attach_above.append((d_top, top_attach))
            attach_below.append((d_bot, bot_attach))

        # rails along both sides, joined by a wrap behind the terminal
        for side, attaches in ((1.0, attach_above), (-1.0, attach_below)):
            pts = [world(-w, side * h)] + [xy for _, xy in sorted(attaches)]
            for p1, p2 in zip(pts, pts[1:]):
                rail_graph.add_edge(p1, p2)
                added += math.hypot(p1[0] - p2[0], p1[1] - p2[1])
        wrap_a, wrap_b = world(-w, h), world(-w, -h)
        rail_graph.add_edge(wrap_a, wrap_b)
        added += math.hypot(wrap_a[0] - wrap_b[0], wrap_a[1] - wrap_b[1])
        rail_graph.rebuild_spanning()

    if split_edge is not None:
        graph.split_edge_at(split_edge[0], split_edge[1], q)
    graph.add_edge((v.x, v.y), q)
    graph.terminals.add(graph.key((v.x, v.y)))
    return added


def unperturb_solution(forest: Forest, pi: PerturbedInstance, colors: int) -> Forest:
    """Lift a solution on the snapped grid instance back to the original one.

    Scales to world coordinates and attaches every displaced original
    terminal by a stub, rerouting foreign crossing edges along nested rails.
    The added length is recorded in the returned forest's provenance.
    Retries with shrinking rail offsets if the lift ever fails validation.
    """
    from ..errors import ShellError
    from ..geometry import SolutionReport, forest_validate

    last: object = None
    for scale in (5e-3, 1e-3, 2e-4, 4e-5):
        try:
            out = _unperturb_once(forest, pi, colors, pi.granularity * scale)
        except ShellError as exc:
            last = [exc]
            continue
        check = forest_validate(out, pi.original)
        if isinstance(check, SolutionReport):
            return out
        last = check
    raise RuntimeError(f"unperturb failed validation at all rail offsets: {str(last)[:200]}")


def _unperturb_once(forest: Forest, pi: PerturbedInstance, colors: int, delta: float) -> Forest:
    from shapely.geometry import Point as ShPoint

    from ..shell import ShellParams, _tree_geometry, excise_disk

    inst = pi.original
    tol = inst.tolerance
    snap = max(tol, pi.granularity * 1e-9)
    shell_params = ShellParams(max(delta, 1e-15))
    rho = 4.0 * delta
    graphs: list[_TreeGraph] = []
    for c in range(colors):
        tree = forest.tree_for(c)
        world_tree = PlaneTree(
            c,
            [(pi.to_world(p.x, p.y), kind) for p, kind in tree.vertices],
            list(tree.edges),
        )
        # clear the tree away from other colors' original terminals so their
        # stubs can always reach them
        foreign = [pt for pt, cc in inst.terminals if cc != c]
        geom = _tree_geometry(world_tree) if world_tree.edges else None
        for t in foreign:
            if geom is not None and geom.distance(ShPoint(t.xy)) < rho:
                world_tree = excise_disk(world_tree, t, rho, shell_params)
                geom = _tree_geometry(world_tree)
        graphs.append(_TreeGraph(world_tree, snap))

    # process displaced terminals farthest-displacement first (deterministic)
    order = sorted(
        range(inst.n),
        key=lambda idx: -inst.terminals[idx][0].dist(pi.to_world(*pi.back_map[idx])),
    )
    added_total = 0.0
    for idx in order:
        p, c = inst.terminals[idx]
        added_total += _attach_terminal(graphs, c, p, delta, tol)

    # snapped grid points that are not original terminals become steiner bends
    original_keys = [
        {graphs[c].key((p.x, p.y)) for p, cc in inst.terminals if cc == c} for c in range(colors)
    ]
    for c in range(colors):
        graphs[c].terminals &= original_keys[c]
        graphs[c].terminals |= original_keys[c]
        for p, cc in inst.terminals:
            if cc == c:
                key = graphs[c].key((p.x, p.y))
                graphs[c]._coords[key] = (p.x, p.y)

    trees = [g.to_plane_tree() for g in graphs]
    out = Forest(trees, dict(forest.provenance))
    out.provenance["unperturb_added_length"] = added_total
    out.provenance["unperturb_delta"] = delta
    return out
