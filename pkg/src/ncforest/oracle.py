"""Ground truth for tiny instances: exact grid-graph optimum and lower bounds.

The grid oracle discretizes the plane to an 8-connected grid graph and finds
the exact minimum-length family of vertex-disjoint colored Steiner trees by
mixed-integer programming (single-commodity flow formulation per color,
node-disjointness across colors, crossing diagonals excluded).  It is fully
independent of the geometric solvers it is used to check.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import LinearConstraint, milp

from .errors import ResourceCapError
from .geometry import Forest, Instance, PlaneTree, Point, STEINER, TERMINAL, total_length
from .steiner import STEINER_RATIO_BOUND, euclidean_mst

# worst-case ratio of 8-connected grid distance over Euclidean distance
OCTILE_FACTOR = 1.0 / math.cos(math.pi / 8)


@dataclass(frozen=True)
class GridOracleConfig:
    resolution: int = 8
    max_terminals: int = 6
    max_states: int = 900  # grid node cap
    pad_cells: int = 2

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("grid oracle resolution must be >= 2")


@dataclass
class OracleResult:
    forest: Forest
    length: float
    snapped: Instance
    discretization_error: float
    nodes: int


def lower_bound(inst: Instance) -> float:
    """Certified lower bound on the length of any valid forest.

    max of (a) sum of per-color MST lengths divided by the Steiner ratio
    bound, and (b) sum of per-color maximum pairwise distances (each tree
    connects every pair of its terminals, so this dominates the first-to-last
    distance of any visiting order).
    """
    mst_bound = 0.0
    pair_bound = 0.0
    for c in range(inst.k):
        pts = inst.color_points(c)
        if len(pts) < 2:
            continue
        mst_bound += total_length(euclidean_mst(pts)) / STEINER_RATIO_BOUND
        pair_bound += max(p.dist(q) for i, p in enumerate(pts) for q in pts[i + 1 :])
    return max(mst_bound, pair_bound)


def _grid_layout(inst: Instance, cfg: GridOracleConfig):
    x0, y0, x1, y1 = inst.bbox()
    width = max(x1 - x0, 1e-9)
    height = max(y1 - y0, 1e-9)
    cell = max(width, height) / cfg.resolution
    pad = cfg.pad_cells
    nx = int(math.ceil(width / cell)) + 2 * pad + 1
    ny = int(math.ceil(height / cell)) + 2 * pad + 1
    ox = x0 - pad * cell
    oy = y0 - pad * cell
    return cell, ox, oy, nx, ny


def grid_oracle_optimum(
    inst: Instance, cfg: GridOracleConfig | None = None, cache_path: str | Path | None = None
) -> OracleResult:
    """Exact optimal non-crossing Steiner forest on the discretized grid.

    Terminals snap to their nearest grid node.  The returned length is exact
    for the grid graph; relative to the Euclidean optimum it carries the
    octile discretization factor plus the snapping displacement, both
    reported via ``discretization_error``.
    """
    cfg = cfg or GridOracleConfig()
    if inst.n > cfg.max_terminals:
        raise ResourceCapError(f"{inst.n} terminals exceeds oracle cap {cfg.max_terminals}")
    if inst.k > 3:
        raise ResourceCapError("grid oracle supports at most 3 colors")

    cache_key = None
    if cache_path is not None:
        from .formats import instance_hash

        cache_key = f"{instance_hash(inst)}:{cfg.resolution}:{cfg.pad_cells}"
        cached = _cache_get(cache_path, cache_key)
        if cached is not None:
            return _result_from_cache(cached, inst, cfg)

    result = _solve_grid(inst, cfg)
    if cache_path is not None and cache_key is not None:
        _cache_put(cache_path, cache_key, result)
    return result


def _solve_grid(inst: Instance, cfg: GridOracleConfig) -> OracleResult:
    cell, ox, oy, nx, ny = _grid_layout(inst, cfg)
    n_nodes = nx * ny
    if n_nodes > cfg.max_states:
        raise ResourceCapError(f"grid has {n_nodes} nodes, cap is {cfg.max_states}")

    def node_id(ix: int, iy: int) -> int:
        return iy * nx + ix

    def node_xy(v: int) -> tuple[float, float]:
        iy, ix = divmod(v, nx)
        return (ox + ix * cell, oy + iy * cell)

    # undirected edges: 4-neighbor plus diagonals
    edges: list[tuple[int, int, float]] = []
    diag_pairs: list[tuple[int, int]] = []  # indices into edges of crossing diagonals
    edge_index: dict[tuple[int, int], int] = {}

    def add_edge(u: int, v: int, w: float) -> int:
        key = (min(u, v), max(u, v))
        if key in edge_index:
            return edge_index[key]
        edge_index[key] = len(edges)
        edges.append((key[0], key[1], w))
        return edge_index[key]

    for iy in range(ny):
        for ix in range(nx):
            v = node_id(ix, iy)
            if ix + 1 < nx:
                add_edge(v, node_id(ix + 1, iy), cell)
            if iy + 1 < ny:
                add_edge(v, node_id(ix, iy + 1), cell)
    for iy in range(ny - 1):
        for ix in range(nx - 1):
            a = node_id(ix, iy)
            b = node_id(ix + 1, iy)
            c = node_id(ix, iy + 1)
            d = node_id(ix + 1, iy + 1)
            e1 = add_edge(a, d, cell * math.sqrt(2))
            e2 = add_edge(b, c, cell * math.sqrt(2))
            diag_pairs.append((e1, e2))

    n_edges = len(edges)
    k = inst.k

    # snap terminals
    terminal_nodes: list[set[int]] = [set() for _ in range(k)]
    displacement = 0.0
    taken: dict[int, int] = {}
    for p, c in inst.terminals:
        ix = min(nx - 1, max(0, round((p.x - ox) / cell)))
        iy = min(ny - 1, max(0, round((p.y - oy) / cell)))
        v = node_id(ix, iy)
        if v in taken and taken[v] != c:
            raise ResourceCapError(
                "terminals of different colors snap to one grid node; raise the resolution"
            )
        taken[v] = c
        terminal_nodes[c].add(v)
        gx, gy = node_xy(v)
        displacement += math.hypot(p.x - gx, p.y - gy)

    # variable layout per color: x edges | y nodes | per-commodity directed flows
    commodities = [max(0, len(terminal_nodes[c]) - 1) for c in range(k)]
    nx_vars = n_edges
    ny_vars = n_nodes
    per_color = [nx_vars + ny_vars + 2 * n_edges * commodities[c] for c in range(k)]
    color_base = [0]
    for c in range(k - 1):
        color_base.append(color_base[-1] + per_color[c])
    n_vars = color_base[-1] + per_color[-1]

    def xvar(c, e):
        return color_base[c] + e

    def yvar(c, v):
        return color_base[c] + nx_vars + v

    def fvar(c, q, e, direction):
        return color_base[c] + nx_vars + ny_vars + 2 * (q * n_edges + e) + direction

    obj = np.zeros(n_vars)
    integrality = np.zeros(n_vars)
    lb = np.zeros(n_vars)
    ub = np.ones(n_vars)
    for c in range(k):
        for e, (_, _, w) in enumerate(edges):
            obj[xvar(c, e)] = w
            integrality[xvar(c, e)] = 1
        # ownership vars stay continuous: with binary x, a feasible 0/1
        # completion exists exactly when the colored subgraphs are
        # node-disjoint, so relaxing y loses nothing
        for t in terminal_nodes[c]:
            lb[yvar(c, t)] = 1

    rows, cols, vals = [], [], []
    c_lo, c_hi = [], []
    row = 0

    def add_constraint(entries, lo, hi):
        nonlocal row
        for col, val in entries:
            rows.append(row)
            cols.append(col)
            vals.append(val)
        c_lo.append(lo)
        c_hi.append(hi)
        row += 1

    inf = np.inf
    for c in range(k):
        terms = terminal_nodes[c]
        if len(terms) >= 2:
            ordered = sorted(terms)
            root, targets = ordered[0], ordered[1:]
            # one unit commodity root -> target; f <= x gives a strong relaxation
            for q, target in enumerate(targets):
                incident: list[list[tuple[int, float]]] = [[] for _ in range(n_nodes)]
                for e, (u, v, _) in enumerate(edges):
                    # direction 0: u -> v, direction 1: v -> u
                    incident[v].append((fvar(c, q, e, 0), 1.0))
                    incident[u].append((fvar(c, q, e, 0), -1.0))
                    incident[u].append((fvar(c, q, e, 1), 1.0))
                    incident[v].append((fvar(c, q, e, 1), -1.0))
                for v in range(n_nodes):
                    demand = -1.0 if v == root else (1.0 if v == target else 0.0)
                    add_constraint(incident[v], demand, demand)
                for e in range(n_edges):
                    add_constraint(
                        [(fvar(c, q, e, 0), 1.0), (fvar(c, q, e, 1), 1.0), (xvar(c, e), -1.0)],
                        -inf,
                        0.0,
                    )
        # used edges need both endpoints owned
        for e, (u, v, _) in enumerate(edges):
            add_constraint([(xvar(c, e), 1.0), (yvar(c, u), -1.0)], -inf, 0.0)
            add_constraint([(xvar(c, e), 1.0), (yvar(c, v), -1.0)], -inf, 0.0)
    # node disjointness across colors
    for v in range(n_nodes):
        add_constraint([(yvar(c, v), 1.0) for c in range(k)], 0.0, 1.0)
    if k == 1 and len(terminal_nodes[0]) >= 2:
        # single color: octile MST over the snapped terminals bounds the optimum
        def octile(u, v):
            ux, uy = node_xy(u)
            vx, vy = node_xy(v)
            dx, dy = abs(ux - vx), abs(uy - vy)
            return max(dx, dy) - min(dx, dy) + min(dx, dy) * math.sqrt(2)

        tnodes = sorted(terminal_nodes[0])
        in_tree = {tnodes[0]}
        ub_len = 0.0
        while len(in_tree) < len(tnodes):
            best = min(
                ((octile(u, v), v) for u in in_tree for v in tnodes if v not in in_tree),
            )
            ub_len += best[0]
            in_tree.add(best[1])
        add_constraint([(xvar(0, e), edges[e][2]) for e in range(n_edges)], 0.0, ub_len + 1e-9)
    # crossing diagonals are mutually exclusive (across and within colors)
    for e1, e2 in diag_pairs:
        for c1 in range(k):
            for c2 in range(k):
                add_constraint([(xvar(c1, e1), 1.0), (xvar(c2, e2), 1.0)], 0.0, 1.0)

    matrix = sparse.csc_matrix((vals, (rows, cols)), shape=(row, n_vars))
    res = milp(
        c=obj,
        constraints=LinearConstraint(matrix, np.array(c_lo), np.array(c_hi)),
        integrality=integrality,
        bounds=(lb, ub),
    )
    if not res.success:
        raise ResourceCapError(f"grid oracle MILP failed: {res.message}")

    trees = []
    snapped_terminals = []
    for c in range(k):
        used_edges = [
            e for e in range(n_edges) if res.x[xvar(c, e)] > 0.5
        ]
        node_pts: dict[int, int] = {}
        vertices: list[tuple[Point, str]] = []
        t_edges: list[tuple[int, int]] = []

        def vid(v, c=c):
            if v not in node_pts:
                x, y = node_xy(v)
                kind = TERMINAL if v in terminal_nodes[c] else STEINER
                node_pts[v] = len(vertices)
                vertices.append((Point(x, y), kind))
            return node_pts[v]

        # spanning subset (drop any cycle edges, cheapest first)
        parent: dict[int, int] = {}

        def find(a):
            parent.setdefault(a, a)
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in sorted(used_edges, key=lambda e: edges[e][2]):
            u, v, _ = edges[e]
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
                t_edges.append((vid(u), vid(v)))
        for t in terminal_nodes[c]:
            vid(t)
        trees.append(PlaneTree(c, vertices, t_edges))
        for t in terminal_nodes[c]:
            x, y = node_xy(t)
            snapped_terminals.append((Point(x, y), c))

    forest = Forest(trees, {"algorithm": "grid_oracle", "resolution": cfg.resolution})
    length = forest.total_length()
    snapped = Instance.build(snapped_terminals, k)
    disc = (OCTILE_FACTOR - 1.0) * length + 2.0 * displacement
    return OracleResult(
        forest=forest,
        length=length,
        snapped=snapped,
        discretization_error=disc,
        nodes=n_nodes,
    )


def _cache_get(path: str | Path, key: str):
    p = Path(path)
    if not p.exists():
        return None
    try:
        data = json.loads(p.read_text())
    except (json.JSONDecodeError, OSError):
        return None
    return data.get(key)


def _cache_put(path: str | Path, key: str, result: OracleResult) -> None:
    from .formats import forest_to_json

    p = Path(path)
    data = {}
    if p.exists():
        try:
            data = json.loads(p.read_text())
        except (json.JSONDecodeError, OSError):
            data = {}
    data[key] = {
        "length": result.length,
        "discretization_error": result.discretization_error,
        "nodes": result.nodes,
        "forest": forest_to_json(result.forest),
        "snapped": [{"x": p2.x, "y": p2.y, "color": c} for p2, c in result.snapped.terminals],
        "k": result.snapped.k,
    }
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(data, sort_keys=True))


def _result_from_cache(cached: dict, inst: Instance, cfg: GridOracleConfig) -> OracleResult:
    from .formats import forest_from_json

    snapped = Instance.build(
        [(Point(t["x"], t["y"]), t["color"]) for t in cached["snapped"]], cached["k"]
    )
    return OracleResult(
        forest=forest_from_json(cached["forest"]),
        length=cached["length"],
        snapped=snapped,
        discretization_error=cached["discretization_error"],
        nodes=cached["nodes"],
    )
