"""Bottom-up dynamic program over the shifted quadtree.

State: per square, a menu of boundary configurations.  A configuration
records, per boundary edge, the portal passes (portal id, slot, color) and
terminal contact points, a non-crossing color-homogeneous partition of those
items into blocks (= connected fragments inside the square), the terminal
bitmask each block has absorbed, and the set of colors whose tree is already
complete inside the square.

Leaves are unit cells: every feasible item selection is enumerated and each
block is realized as a small Steiner tree over inward-nudged item points
(non-crossing partition blocks of boundary points have disjoint hulls, and
nudge depths shrink with partition nesting, so fragments stay disjoint).
Composite squares hash-join their children's menus on the shared-edge pass
sequences, merge block connectivity with a union-find (closing a cycle
rejects the combination), resolve terminals sitting on the children cross,
and let components die only once they carry their whole color class.

Resource caps (portals per edge, passes per leaf and square, beam width,
join quota) keep desk-scale runs finite; hitting one sets a flag in the
report, which voids the approximation certificate but never validity.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from functools import lru_cache

from ..errors import ResourceCapError
from ..geometry import Forest, PlaneTree, Point, STEINER, TERMINAL, total_length
from .dissection import Dissection, HORIZONTAL, VERTICAL
from .partitions import block_nesting_depths, enumerate_noncrossing_partitions
from .perturb import PerturbedInstance

PASS = 0
CONTACT = 1

S, E, N, W = 0, 1, 2, 3  # edges counterclockwise from the bottom
_CORNER_EDGE = {0: S, 1: E, 2: N, 3: W}  # SW, SE, NE, NW corner -> owning edge

NUDGE_BASE = 0.02

# diagnostic counters: why quadruple assemblies get rejected
reject_stats: dict = {}


def _rej(reason):
    reject_stats[reason] = reject_stats.get(reason, 0) + 1
    return None


@dataclass(frozen=True)
class DpLimits:
    m_cap: int = 6
    leaf_m: int = 1
    leaf_budget: int = 4
    square_cap: int = 24
    beam: int = 3000
    join_quota: int = 8000
    # squares whose closure holds no terminal only ever carry through-traffic;
    # they get a tight pass budget and no single-edge U-turn blocks
    empty_budget: int = 2
    # cells farther than this (Chebyshev, in cells) from the per-color MST
    # corridor carry no structure at all; 0 disables the corridor cap
    corridor_w: int = 2
    # wall-clock budget for one dp run; None = unbounded
    time_budget_s: float | None = None


@dataclass
class DpResult:
    forest: Forest
    length: float
    histogram: dict
    flags: set
    root_entry_count: int


class _Terminals:
    """Terminal context in box coordinates."""

    def __init__(self, pi: PerturbedInstance, diss: Dissection):
        self.pos: list[tuple[float, float]] = []
        self.color: list[int] = []
        self.by_pos: dict[tuple[int, int], int] = {}
        a, b = diss.shift
        for tid, (p, c) in enumerate(pi.snapped.terminals):
            bx, by = p.x + a, p.y + b
            self.pos.append((bx, by))
            self.color.append(c)
            self.by_pos[(int(round(bx)), int(round(by)))] = tid
        self.k = pi.snapped.k
        self.full_mask = [0] * self.k
        self.count = [0] * self.k
        for tid, c in enumerate(self.color):
            self.full_mask[c] |= 1 << tid
            self.count[c] += 1


def _resolution_map(terms: _Terminals, diss: Dissection):
    """square -> terminal ids resolved there; plus terminals on the box rim."""
    by_square: dict[tuple[int, int, int], list[int]] = {}
    root_boundary: list[int] = []
    side0 = diss.box_side
    for tid, (tx, ty) in enumerate(terms.pos):
        if tx <= 0 or tx >= side0 or ty <= 0 or ty >= side0:
            root_boundary.append(tid)
            continue
        level, ix, iy = 0, 0, 0
        while True:
            side = diss.side_at(level)
            cx = ix * side + side / 2
            cy = iy * side + side / 2
            if abs(tx - cx) < 1e-9 or abs(ty - cy) < 1e-9:
                by_square.setdefault((level, ix, iy), []).append(tid)
                break
            level += 1
            side = diss.side_at(level)
            ix = int(tx // side)
            iy = int(ty // side)
            if level > diss.depth:  # pragma: no cover
                raise AssertionError("terminal resolution descent failed")
    return by_square, root_boundary


# ---------------------------------------------------------------------------
# configurations
#
# config key = (edges, corners, labels, masks, completed)
#   edges:   4-tuple of per-edge item tuples, ascending coordinate order
#   corners: 4-tuple (SW, SE, NE, NW): contact item or None
#   labels:  block label per cyclic item (restricted-growth canonical)
#   masks:   terminal bitmask per block label
#   completed: frozenset of colors whose tree is finished inside
#
# pass item:    (PASS, axis, u, pid, slot, color)
# contact item: (CONTACT, tid, color)

EMPTY_KEY = (
    (tuple(), tuple(), tuple(), tuple()),
    (None, None, None, None),
    tuple(),
    tuple(),
    frozenset(),
)


def _cyclic_items(edges, corners):
    """Items in counterclockwise boundary order starting at the SW corner."""
    out = []
    for e_idx, c_idx in ((S, 0), (E, 1), (N, 2), (W, 3)):
        if corners[c_idx] is not None:
            out.append(corners[c_idx])
        seq = edges[e_idx]
        if e_idx in (N, W):
            seq = tuple(reversed(seq))
        out.extend(seq)
    return out


def _item_color(item):
    return item[5] if item[0] == PASS else item[2]


def _edge_pass_key(edge_items):
    return tuple((it[3], it[4], it[5]) for it in edge_items if it[0] == PASS)


def _canonical_labels(labels):
    remap: dict = {}
    out = []
    for lab in labels:
        if lab not in remap:
            remap[lab] = len(remap)
        out.append(remap[lab])
    return out


# ---------------------------------------------------------------------------
# leaf geometry


def _fragment_length(points: tuple) -> float:
    return _fragment_cached(points)[0]


def _fragment_edges(points: tuple):
    return _fragment_cached(points)[1]


@lru_cache(maxsize=200000)
def _fragment_cached(points: tuple):
    from ..steiner import steiner_tree

    pts = [Point(x, y) for x, y in points]
    if len(pts) < 2:
        return 0.0, tuple()
    res = steiner_tree(pts)
    return res.length, tuple((a.xy, b.xy) for a, b in res.tree.segments())


class _LeafGeometry:
    """Item positions and inward nudges for one unit cell."""

    def __init__(self, corner, slot_point, terms):
        self.cx, self.cy = corner
        self.slot_point = slot_point
        self.terms = terms

    def item_point(self, item):
        if item[0] == PASS:
            return self.slot_point(item[1], item[2], item[3], item[4])
        return self.terms.pos[item[1]]

    def _inward(self, x, y):
        dx = dy = 0.0
        if abs(x - self.cx) < 1e-9:
            dx = 1.0
        elif abs(x - (self.cx + 1)) < 1e-9:
            dx = -1.0
        if abs(y - self.cy) < 1e-9:
            dy = 1.0
        elif abs(y - (self.cy + 1)) < 1e-9:
            dy = -1.0
        norm = math.hypot(dx, dy) or 1.0
        return dx / norm, dy / norm

    def block_parts(self, items, depth: int):
        nu = NUDGE_BASE * (2.0 ** (-depth))
        stubs = []
        nudged = []
        for item in items:
            x, y = self.item_point(item)
            dx, dy = self._inward(x, y)
            q = (x + nu * dx, y + nu * dy)
            stubs.append(((x, y), q))
            nudged.append(q)
        return stubs, tuple(sorted(nudged))

    def block_length(self, items, depth: int) -> float:
        stubs, nudged = self.block_parts(items, depth)
        return sum(math.hypot(a[0] - b[0], a[1] - b[1]) for a, b in stubs) + _fragment_length(nudged)

    def block_edges(self, items, depth: int):
        stubs, nudged = self.block_parts(items, depth)
        return [*stubs, *_fragment_edges(nudged)]


# ---------------------------------------------------------------------------
# leaf menu combinatorics (cached per geometric signature)


def _distribute(n_portals: int, per_cap: int, budget: int):
    out = []

    def rec(i, acc, left):
        if i == n_portals:
            out.append(tuple(acc))
            return
        for v in range(0, min(per_cap, left) + 1):
            acc.append(v)
            rec(i + 1, acc, left - v)
            acc.pop()

    rec(0, [], budget)
    return out


def _color_strings(total: int, k: int):
    if total == 0:
        yield ()
        return
    for code in range(k**total):
        s = []
        x = code
        for _ in range(total):
            s.append(x % k)
            x //= k
        yield tuple(s)


class _RelGeometry:
    """Unit-cell geometry in cell-relative coordinates, for menu caching.

    Placeholder pass items are (PASS, -1, e_idx, p_idx, slot, color) and
    placeholder contacts (CONTACT, -1 - corner_idx, color); positions come
    from the relative portal offsets of the signature.  The slot band logic
    mirrors the engine's cell-local rule exactly, so cached lengths match
    the realized geometry.
    """

    _CORNER_POS = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))

    def __init__(self, rel_sig, r):
        self.rel_sig = rel_sig
        self.r = r

    def _rel_slot(self, e_idx, p_idx, slot):
        ts = self.rel_sig[e_idx]
        t = ts[p_idx]
        others = [tt for j, tt in enumerate(ts) if j != p_idx]
        gap_left = min([t - tt for tt in others if tt < t] + [t])
        gap_right = min([tt - t for tt in others if tt > t] + [1.0 - t])
        band = min(1.0 / (4.0 * self.r), 0.6 * gap_left, 0.6 * gap_right)
        off = (slot - (self.r - 1) / 2.0) * (band / max(1, self.r - 1))
        return t + off

    def item_point(self, item):
        if item[0] == PASS:
            _, _, e_idx, p_idx, slot, _ = item
            t = self._rel_slot(e_idx, p_idx, slot)
            return {S: (t, 0.0), E: (1.0, t), N: (t, 1.0), W: (0.0, t)}[e_idx]
        return self._CORNER_POS[-1 - item[1]]

    def _inward(self, x, y):
        dx = 1.0 if x < 1e-9 else (-1.0 if x > 1 - 1e-9 else 0.0)
        dy = 1.0 if y < 1e-9 else (-1.0 if y > 1 - 1e-9 else 0.0)
        norm = math.hypot(dx, dy) or 1.0
        return dx / norm, dy / norm

    def block_length(self, items, depth: int) -> float:
        nu = NUDGE_BASE * (2.0 ** (-depth))
        stub_total = 0.0
        nudged = []
        for item in items:
            x, y = self.item_point(item)
            dx, dy = self._inward(x, y)
            nudged.append((x + nu * dx, y + nu * dy))
            stub_total += nu
        return stub_total + _fragment_length(tuple(sorted(nudged)))


def _leaf_combinatorics(rel_sig, corner_colors, k, r, limits):
    """All (edges, corners, labels, depths, length) for a cell signature.

    Items carry relative placeholders; the caller substitutes real portal
    handles and terminal ids per concrete cell.  Cells without corner
    terminals are pure transit: tighter budget, no single-edge U-turns.
    """
    geo = _RelGeometry(rel_sig, r)
    portals = [(e_idx, p_idx) for e_idx in (S, E, N, W) for p_idx in range(len(rel_sig[e_idx]))]
    results = []
    present = [i for i in range(4) if corner_colors[i] is not None]
    is_empty_cell = not present
    budget = min(limits.leaf_budget, limits.empty_budget) if is_empty_cell else limits.leaf_budget
    for counts in _distribute(len(portals), r, budget):
        total = sum(counts)
        for contact_mask in range(1 << len(present)):
            contacts = [present[j] for j in range(len(present)) if contact_mask >> j & 1]
            n_items = total + len(contacts)
            if n_items == 0:
                results.append(((tuple(),) * 4, (None,) * 4, tuple(), tuple(), 0.0))
                continue
            if n_items == 1:
                continue  # a lone boundary item can never form a block
            for colors in _color_strings(total, k):
                edges = [[], [], [], []]
                ci = 0
                for (e_idx, p_idx), cnt in zip(portals, counts):
                    for slot in range(cnt):
                        edges[e_idx].append((PASS, -1, e_idx, p_idx, slot, colors[ci]))
                        ci += 1
                corners: list = [None] * 4
                for c_idx in contacts:
                    corners[c_idx] = (CONTACT, -1 - c_idx, corner_colors[c_idx])
                edges_t = tuple(tuple(e) for e in edges)
                corners_t = tuple(corners)
                cyc = _cyclic_items(edges_t, corners_t)
                col_seq = [_item_color(it) for it in cyc]
                try:
                    parts = enumerate_noncrossing_partitions(
                        col_seq, min_block=2, cap=limits.square_cap
                    )
                except ResourceCapError:
                    continue
                item_edge = []
                for e_idx, c_idx in ((S, 0), (E, 1), (N, 2), (W, 3)):
                    if corners[c_idx] is not None:
                        item_edge.append(-1)  # corners touch two edges
                    item_edge.extend([e_idx] * len(edges[e_idx]))
                for blocks in parts:
                    if is_empty_cell and any(
                        len({item_edge[pos] for pos in block}) == 1 for block in blocks
                    ):
                        continue  # U-turn hugging one edge: transit cells skip it
                    labels = [0] * len(cyc)
                    for b_idx, block in enumerate(blocks):
                        for pos in block:
                            labels[pos] = b_idx
                    labels = _canonical_labels(labels)
                    by_label: dict[int, list[int]] = {}
                    for pos, lab in enumerate(labels):
                        by_label.setdefault(lab, []).append(pos)
                    ordered_blocks = [by_label[lab] for lab in sorted(by_label)]
                    depths = tuple(block_nesting_depths(ordered_blocks))
                    length = 0.0
                    for lab in sorted(by_label):
                        length += geo.block_length(
                            [cyc[pos] for pos in by_label[lab]], depths[lab]
                        )
                    results.append((edges_t, corners_t, tuple(labels), depths, length))
    return results


# ---------------------------------------------------------------------------
# engine


class _DpEngine:
    def __init__(self, pi, diss, colors, r, limits, upper_bound=None):
        self.pi = pi
        self.diss = diss
        self.k = colors
        self.r = r
        self.limits = limits
        self.ub = None if upper_bound is None else upper_bound * 1.0001 + 1e-9
        self.terms = _Terminals(pi, diss)
        self.resolve_map, self.root_boundary = _resolution_map(self.terms, diss)
        self.flags: set = set()
        self.menus: dict = {}
        self._combi_cache: dict = {}
        self._slot_cache: dict = {}
        self._class_cache: dict = {}
        self._edge_cache: dict = {}
        self._cyc_cache: dict = {}
        if limits.m_cap < diss.m:
            self.flags.add("m_capped")
        # squares whose closed region contains a terminal
        self.terminal_squares: set = set()
        for tx, ty in self.terms.pos:
            for level in range(diss.depth + 1):
                side = diss.side_at(level)
                n_sq = 1 << level
                ixs = {int(tx // side)}
                iys = {int(ty // side)}
                if tx / side == int(tx / side):
                    ixs.add(int(tx // side) - 1)
                if ty / side == int(ty / side):
                    iys.add(int(ty // side) - 1)
                for ix in ixs:
                    for iy in iys:
                        if 0 <= ix < n_sq and 0 <= iy < n_sq:
                            self.terminal_squares.add((level, ix, iy))
        self.corridor = self._corridor_cells(limits.corridor_w)
        if self.corridor is not None:
            self.flags.add("corridor")

    def _corridor_cells(self, w: int):
        """Cells within w of any per-color MST edge over the terminals."""
        if w <= 0:
            return None
        from ..steiner import euclidean_mst

        base: set = set()
        n_cells = self.diss.box_side
        for color in range(self.k):
            pts = [Point(x, y) for (x, y), c in zip(self.terms.pos, self.terms.color) if c == color]
            if not pts:
                continue
            if len(pts) == 1:
                base.add((int(min(pts[0].x, n_cells - 1)), int(min(pts[0].y, n_cells - 1))))
                continue
            mst = euclidean_mst(pts)
            for a, b in mst.segments():
                steps = max(1, int(a.dist(b) * 4))
                for i in range(steps + 1):
                    x = a.x + (b.x - a.x) * i / steps
                    y = a.y + (b.y - a.y) * i / steps
                    base.add((min(int(x), n_cells - 1), min(int(y), n_cells - 1)))
        out: set = set()
        for cx, cy in base:
            for dx in range(-w, w + 1):
                for dy in range(-w, w + 1):
                    nx2, ny2 = cx + dx, cy + dy
                    if 0 <= nx2 < n_cells and 0 <= ny2 < n_cells:
                        out.add((nx2, ny2))
        return out

    # --- portal helpers ---

    def _edge_portals(self, axis, u, lo, hi):
        if u <= 0 or u >= self.diss.box_side:
            return []
        return self.diss.portals_in_extent(axis, u, lo, hi, self.limits.m_cap, self.limits.leaf_m)

    def slot_point(self, axis, u, pid, slot):
        """Crossing point of strand `slot` at the portal, in box coordinates.

        The slot band is bounded by the distances to the portal's neighbors
        within its own unit-cell extent and to the cell ends, so the bands
        of different portals can never interleave and both cells sharing an
        edge compute identical points.
        """
        key = (axis, u, pid, slot)
        if key not in self._slot_cache:
            chosen = self.diss.chosen_portals(axis, u, self.limits.m_cap, self.limits.leaf_m)
            t = dict(chosen)[pid]
            cell_lo = math.floor(t)
            cell_hi = cell_lo + 1.0
            same_cell = [tt for q, tt in chosen if q != pid and cell_lo <= tt < cell_hi]
            gap_left = min([t - tt for tt in same_cell if tt < t] + [t - cell_lo])
            gap_right = min([tt - t for tt in same_cell if tt > t] + [cell_hi - t])
            band = min(1.0 / (4.0 * self.r), 0.6 * gap_left, 0.6 * gap_right)
            off = (slot - (self.r - 1) / 2.0) * (band / max(1, self.r - 1))
            tt = t + off
            self._slot_cache[key] = (float(u), tt) if axis == VERTICAL else (tt, float(u))
        return self._slot_cache[key]

    # --- leaf menus ---

    def leaf_menu(self, ix, iy):
        if self.corridor is not None and (ix, iy) not in self.corridor:
            return {EMPTY_KEY: (0.0, None)}
        cx, cy = ix, iy
        specs = [
            (HORIZONTAL, cy, cx, cx + 1),
            (VERTICAL, cx + 1, cy, cy + 1),
            (HORIZONTAL, cy + 1, cx, cx + 1),
            (VERTICAL, cx, cy, cy + 1),
        ]
        portal_handles = []
        rel_sig = []
        for axis, u, lo, hi in specs:
            plist = self._edge_portals(axis, u, lo, hi)
            portal_handles.append(tuple((axis, u, pid) for pid, _t in plist))
            rel_sig.append(tuple(round(t - lo, 9) for _pid, t in plist))
        corners_pos = [(cx, cy), (cx + 1, cy), (cx + 1, cy + 1), (cx, cy + 1)]
        corner_tids = [self.terms.by_pos.get(p) for p in corners_pos]
        corner_colors = tuple(
            None if tid is None else self.terms.color[tid] for tid in corner_tids
        )
        sig = (tuple(rel_sig), corner_colors)
        if sig not in self._combi_cache:
            self._combi_cache[sig] = _leaf_combinatorics(
                tuple(rel_sig), corner_colors, self.k, self.r, self.limits
            )
        menu: dict = {}
        for edges_ph, corners_ph, labels, depths, length in self._combi_cache[sig]:
            edges = tuple(
                tuple(
                    (PASS, *portal_handles[item[2]][item[3]], item[4], item[5])
                    for item in edge
                )
                for edge in edges_ph
            )
            real_corners = tuple(
                None if item is None else (CONTACT, corner_tids[c_idx], item[2])
                for c_idx, item in enumerate(corners_ph)
            )
            if self.ub is not None and length > self.ub:
                continue
            masks = tuple(0 for _ in range(len(set(labels))))
            key = (edges, real_corners, labels, masks, frozenset())
            if key not in menu or menu[key][0] > length:
                menu[key] = (length, None)
        return menu

    # --- join machinery ---
    #
    # Short terminal-free transit configs vastly outnumber the configs that
    # actually carry terminal structure, so plain shortest-first beams and
    # quotas would starve the latter.  Beams and join quotas are therefore
    # stratified by "coverage class": which contacts, resolved terminals,
    # and completed colors a configuration carries.

    def _coverage_class(self, key):
        cached = self._class_cache.get(key)
        if cached is not None:
            return cached
        edges, corners, _labels, masks, completed = key
        tids = [it[1] for e in edges for it in e if it[0] == CONTACT]
        tids += [c[1] for c in corners if c is not None]
        mask_union = 0
        for m in masks:
            mask_union |= m
        shape = tuple(
            (min(2, sum(1 for it in e if it[0] == PASS)), frozenset(_item_color(it) for it in e))
            for e in edges
        )
        out = (frozenset(tids), completed, mask_union, shape)
        self._class_cache[key] = out
        return out

    def _pairs(self, menu_a, menu_b, edge_a, edge_b, quota):
        buckets_a: dict = {}
        for key, (length, _) in menu_a.items():
            buckets_a.setdefault(_edge_pass_key(key[0][edge_a]), []).append((length, key))
        buckets_b: dict = {}
        for key, (length, _) in menu_b.items():
            buckets_b.setdefault(_edge_pass_key(key[0][edge_b]), []).append((length, key))
        per_class: dict = {}
        class_cap = max(128, quota // 16)
        for bkey, items_a in buckets_a.items():
            items_b = buckets_b.get(bkey)
            if not items_b:
                continue
            items_a.sort(key=lambda t: (t[0], t[1]))
            items_b.sort(key=lambda t: (t[0], t[1]))
            for cand in _k_smallest_pairs(items_a, items_b, quota, self.ub):
                cls = (self._coverage_class(cand[1]), self._coverage_class(cand[2]))
                bucket = per_class.setdefault(cls, [])
                bucket.append(cand)
        total = 0
        for cls, cands in per_class.items():
            cands.sort(key=lambda t: t[0])
            if len(cands) > class_cap:
                self.flags.add("join_quota")
                del cands[class_cap:]
            total += len(cands)
        # round-robin over classes so every kind of structure surfaces early
        out = []
        iters = [iter(c) for c in per_class.values()]
        while iters and len(out) < max(quota, total):
            nxt = []
            for it in iters:
                cand = next(it, None)
                if cand is not None:
                    out.append(cand)
                    nxt.append(it)
            iters = nxt
        return out

    # --- per-square combine ---

    def combine_square(self, level, ix, iy):
        child = lambda dx, dy: self.menus[(level + 1, 2 * ix + dx, 2 * iy + dy)]
        sw, se, nw, ne = child(0, 0), child(1, 0), child(0, 1), child(1, 1)
        quota = self.limits.join_quota
        bottom = self._pairs(sw, se, E, W, quota)
        top = self._pairs(nw, ne, E, W, quota)
        buckets_top: dict = {}
        for pair in top:
            keyt = (_edge_pass_key(pair[1][0][S]), _edge_pass_key(pair[2][0][S]))
            buckets_top.setdefault(keyt, []).append(pair)
        menu: dict = {}
        examined = 0
        # fair enumeration: advance every bottom candidate's bucket in turn,
        # so no single giant bucket starves the rest
        lanes = []
        for lb, k_sw, k_se in bottom:
            keyb = (_edge_pass_key(k_sw[0][N]), _edge_pass_key(k_se[0][N]))
            bucket = buckets_top.get(keyb)
            if bucket:
                lanes.append((k_sw, k_se, iter(bucket)))
        while lanes and examined <= quota * 3:
            nxt = []
            for k_sw, k_se, it in lanes:
                pair_t = next(it, None)
                if pair_t is None:
                    continue
                nxt.append((k_sw, k_se, it))
                examined += 1
                if examined > quota * 3:
                    self.flags.add("join_quota")
                    break
                _lt, k_nw, k_ne = pair_t
                assembled = self._assemble(level, ix, iy, (k_sw, k_se, k_nw, k_ne))
                if assembled is None:
                    continue
                key = assembled
                length = sw[k_sw][0] + se[k_se][0] + nw[k_nw][0] + ne[k_ne][0]
                if self.ub is not None and length > self.ub:
                    continue
                if key not in menu or menu[key][0] > length:
                    menu[key] = (length, (k_sw, k_se, k_nw, k_ne))
            lanes = nxt
        return self._stratified_beam(menu)

    def _stratified_beam(self, menu):
        if len(menu) <= self.limits.beam:
            return menu
        self.flags.add("beam_pruned")
        per_class: dict = {}
        for key, val in menu.items():
            per_class.setdefault(self._coverage_class(key), []).append((val[0], key))
        share = max(8, self.limits.beam // max(1, len(per_class)))
        kept = {}
        for cands in per_class.values():
            cands.sort(key=lambda t: t[0])
            for length, key in cands[:share]:
                kept[key] = menu[key]
        if len(kept) < self.limits.beam:
            # fill the rest with the globally shortest leftovers
            rest = sorted(
                (kv for kv in menu.items() if kv[0] not in kept), key=lambda kv: kv[1][0]
            )
            for key, val in rest[: self.limits.beam - len(kept)]:
                kept[key] = val
        return kept

    # --- quadruple assembly ---

    def _edge_items_with_labels(self, key, e_idx):
        """Items (with labels) on one edge, ascending order, incl. its corner."""
        cache_key = (key, e_idx)
        cached = self._edge_cache.get(cache_key)
        if cached is not None:
            return cached
        edges, corners, labels, _, _ = key
        cyc = self._cyclic(edges, corners)
        out = []
        pos = 0
        for ee, c_idx in ((S, 0), (E, 1), (N, 2), (W, 3)):
            if corners[c_idx] is not None:
                if _CORNER_EDGE[c_idx] == e_idx:
                    out.append((corners[c_idx], labels[pos], True))
                pos += 1
            seq = edges[ee]
            n_seq = len(seq)
            if ee == e_idx:
                idx_range = range(pos, pos + n_seq)
                if ee in (N, W):
                    ordered = list(zip(reversed(list(idx_range)), seq))
                else:
                    ordered = list(zip(idx_range, seq))
                # ordered pairs (cyclic position, item) must come out ascending;
                # reversed edges stored ascending already, so map positions only
                for cyc_pos, item in ordered:
                    out.append((item, labels[cyc_pos], False))
            pos += n_seq
        self._edge_cache[cache_key] = out
        return out

    def _cyclic(self, edges, corners):
        cache_key = (edges, corners)
        cached = self._cyc_cache.get(cache_key)
        if cached is None:
            cached = _cyclic_items(edges, corners)
            self._cyc_cache[cache_key] = cached
        return cached

    def _assemble(self, level, ix, iy, quad):
        k_sw, k_se, k_nw, k_ne = quad
        children = [k_sw, k_se, k_nw, k_ne]
        is_root = level == 0
        if (
            k_sw is EMPTY_KEY
            and k_se is EMPTY_KEY
            and k_nw is EMPTY_KEY
            and k_ne is EMPTY_KEY
        ):
            to_resolve = self.resolve_map.get((level, ix, iy), [])
            if is_root:
                to_resolve = list(to_resolve) + self.root_boundary
            completed_fast: set = set()
            for tid in to_resolve:
                col = self.terms.color[tid]
                if self.terms.count[col] != 1 or col in completed_fast:
                    return _rej('unresolved_terminal')
                completed_fast.add(col)
            if is_root and completed_fast != set(range(self.k)):
                return _rej('root_incomplete')
            if completed_fast:
                return (EMPTY_KEY[0], EMPTY_KEY[1], EMPTY_KEY[2], EMPTY_KEY[3], frozenset(completed_fast))
            return EMPTY_KEY

        parent_uf: dict = {}
        mask: dict = {}
        colorof: dict = {}

        def find(x):
            parent_uf.setdefault(x, x)
            root = x
            while parent_uf[root] != root:
                root = parent_uf[root]
            while parent_uf[x] != root:
                parent_uf[x], x = root, parent_uf[x]
            return root

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra == rb:
                return False
            parent_uf[ra] = rb
            mask[rb] = mask.get(rb, 0) | mask.get(ra, 0)
            return True

        completed: set = set()
        for key in children:
            for col in key[4]:
                if col in completed:
                    return _rej('dup_completed')
                completed.add(col)

        for ci, key in enumerate(children):
            edges, corners, labels, masks, _ = key
            cyc = self._cyclic(edges, corners)
            seen = set()
            for item, lab in zip(cyc, labels):
                node = (ci, lab)
                col = _item_color(item)
                if col in completed:
                    return _rej('completed_color_item')
                parent_uf.setdefault(node, node)
                colorof[node] = col
                if lab not in seen:
                    seen.add(lab)
                    mask[node] = masks[lab]

        # match passes across the internal cross
        internal = [(0, E, 1, W), (2, E, 3, W), (0, N, 2, S), (1, N, 3, S)]
        for ca, ea, cb, eb in internal:
            pa = [(it, lab) for it, lab, _ in self._edge_items_with_labels(children[ca], ea) if it[0] == PASS]
            pb = [(it, lab) for it, lab, _ in self._edge_items_with_labels(children[cb], eb) if it[0] == PASS]
            if len(pa) != len(pb):
                return _rej('pass_count_mismatch')
            for (ia, la), (ib, lbb) in zip(pa, pb):
                if ia != ib:
                    return _rej('pass_item_mismatch')
                if not union((ca, la), (cb, lbb)):
                    return _rej('pass_cycle')

        # merge contacts at shared terminals
        contact_nodes: dict[int, list] = {}
        for ci, key in enumerate(children):
            edges, corners, labels, _, _ = key
            cyc = self._cyclic(edges, corners)
            for item, lab in zip(cyc, labels):
                if item[0] == CONTACT:
                    contact_nodes.setdefault(item[1], []).append((ci, lab))
        for tid, nodes in contact_nodes.items():
            for other in nodes[1:]:
                if find(nodes[0]) == find(other):
                    return _rej('contact_cycle')
                union(nodes[0], other)

        # resolve terminals on this square's cross (and rim, at the root)
        to_resolve = list(self.resolve_map.get((level, ix, iy), []))
        if is_root:
            to_resolve.extend(self.root_boundary)
        for tid in to_resolve:
            col = self.terms.color[tid]
            nodes = contact_nodes.get(tid)
            if not nodes:
                if self.terms.count[col] == 1:
                    if col in completed:
                        return _rej('singleton_dup')
                    completed.add(col)
                    continue
                return _rej('unresolved_terminal')
            root = find(nodes[0])
            mask[root] = mask.get(root, 0) | (1 << tid)

        # parent boundary: passes from children edges + surviving contacts
        side = self.diss.side_at(level)
        x0, y0 = ix * side, iy * side
        x1, y1 = x0 + side, y0 + side
        parent_corners_pos = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))

        child_edge_on_parent = [
            (S, [(0, S), (1, S)]),
            (E, [(1, E), (3, E)]),
            (N, [(2, N), (3, N)]),
            (W, [(0, W), (2, W)]),
        ]
        edge_items: list[list] = [[], [], [], []]  # (sort_coord, item, node)
        for e_idx, parts in child_edge_on_parent:
            for ci, ce in parts:
                for item, lab, _is_corner in self._edge_items_with_labels(children[ci], ce):
                    if item[0] != PASS:
                        continue
                    node = find((ci, lab))
                    axis, u, pid, slot = item[1], item[2], item[3], item[4]
                    x, y = self.slot_point(axis, u, pid, slot)
                    coord = x if e_idx in (S, N) else y
                    edge_items[e_idx].append((coord, item, node))

        corner_items: list = [None] * 4
        corner_nodes: list = [None] * 4
        seen_contacts: set = set()
        resolved = set(to_resolve)
        for tid, nodes in contact_nodes.items():
            if tid in resolved or tid in seen_contacts:
                continue
            seen_contacts.add(tid)
            tx, ty = self.terms.pos[tid]
            node = find(nodes[0])
            item = (CONTACT, tid, self.terms.color[tid])
            placed = False
            for c_idx, (px, py) in enumerate(parent_corners_pos):
                if abs(tx - px) < 1e-9 and abs(ty - py) < 1e-9:
                    corner_items[c_idx] = item
                    corner_nodes[c_idx] = node
                    placed = True
                    break
            if placed:
                continue
            if abs(ty - y0) < 1e-9 and x0 < tx < x1:
                edge_items[S].append((tx, item, node))
            elif abs(tx - x1) < 1e-9 and y0 < ty < y1:
                edge_items[E].append((ty, item, node))
            elif abs(ty - y1) < 1e-9 and x0 < tx < x1:
                edge_items[N].append((tx, item, node))
            elif abs(tx - x0) < 1e-9 and y0 < ty < y1:
                edge_items[W].append((ty, item, node))
            else:  # contact strictly inside but not resolved here: impossible
                return _rej('contact_nowhere')

        new_edges = []
        node_by_edge = []
        for e_idx in range(4):
            edge_items[e_idx].sort(key=lambda t: t[0])
            new_edges.append(tuple(it for _, it, _n in edge_items[e_idx]))
            node_by_edge.append([n for _, _it, n in edge_items[e_idx]])

        total_items = sum(len(e) for e in new_edges) + sum(1 for c in corner_items if c)
        if total_items > self.limits.square_cap:
            self.flags.add("square_cap")
            return _rej('square_cap')
        is_transit = not is_root and (level, ix, iy) not in self.terminal_squares
        if is_transit and total_items > self.limits.empty_budget:
            self.flags.add("empty_budget")
            return _rej('empty_budget')

        cyc_nodes = []
        for e_idx, c_idx in ((S, 0), (E, 1), (N, 2), (W, 3)):
            if corner_items[c_idx] is not None:
                cyc_nodes.append(corner_nodes[c_idx])
            nodes = node_by_edge[e_idx]
            if e_idx in (N, W):
                nodes = list(reversed(nodes))
            cyc_nodes.extend(nodes)
        if is_transit and cyc_nodes:
            # no U-turn blocks hugging a single edge in transit squares
            root_edges: dict = {}
            for e_idx in range(4):
                for node in node_by_edge[e_idx]:
                    root_edges.setdefault(find(node), set()).add(e_idx)
            if any(len(edges_used) == 1 for edges_used in root_edges.values()):
                self.flags.add("empty_budget")
                return _rej('uturn')

        boundary_roots = {find(nd) for nd in cyc_nodes}
        all_roots = {find((ci, lab)) for ci, key in enumerate(children) for lab in set(key[2])}
        for root in all_roots:
            if root in boundary_roots:
                continue
            col = colorof.get(root)
            m = mask.get(root, 0)
            if col is None or m == 0 or m != self.terms.full_mask[col]:
                return _rej('dying_incomplete')
            if col in completed:
                return _rej('dying_dup')
            completed.add(col)

        if is_root:
            if cyc_nodes:
                return _rej('root_items')
            if completed != set(range(self.k)):
                return _rej('root_incomplete')
            return EMPTY_KEY

        labels = tuple(_canonical_labels([find(nd) for nd in cyc_nodes]))
        root_masks: dict = {}
        order = []
        for nd in cyc_nodes:
            root = find(nd)
            if root not in root_masks:
                root_masks[root] = mask.get(root, 0)
                order.append(root)
        masks = tuple(root_masks[r2] for r2 in order)
        return (tuple(new_edges), tuple(corner_items), labels, masks, frozenset(completed))

    # --- main loop ---

    def run(self) -> DpResult:
        deadline = (
            time.monotonic() + self.limits.time_budget_s
            if self.limits.time_budget_s is not None
            else None
        )

        def check_time():
            if deadline is not None and time.monotonic() > deadline:
                raise ResourceCapError("dp time budget exhausted")

        depth = self.diss.depth
        n_cells = 1 << depth
        for iy in range(n_cells):
            check_time()
            for ix in range(n_cells):
                self.menus[(depth, ix, iy)] = self.leaf_menu(ix, iy)
        for level in range(depth - 1, -1, -1):
            n_sq = 1 << level
            for iy in range(n_sq):
                for ix in range(n_sq):
                    check_time()
                    self.menus[(level, ix, iy)] = self.combine_square(level, ix, iy)
        root_menu = self.menus[(0, 0, 0)]
        if not root_menu:
            raise ResourceCapError(
                "dynamic program found no feasible root configuration under the caps "
                f"(flags: {sorted(self.flags)})"
            )
        best_key = min(root_menu, key=lambda kk: root_menu[kk][0])
        length = root_menu[best_key][0]
        forest, histogram = self._reconstruct(best_key)
        return DpResult(forest, length, histogram, set(self.flags), len(root_menu))

    # --- reconstruction ---

    def _reconstruct(self, root_key):
        color_segments: dict[int, list] = {c: [] for c in range(self.k)}
        hist: dict = {}

        def walk(level, ix, iy, key):
            entry = self.menus[(level, ix, iy)][key]
            if level == self.diss.depth:
                geo = _LeafGeometry((ix, iy), self.slot_point, self.terms)
                edges, corners, labels, _, _ = key
                cyc = _cyclic_items(edges, corners)
                by_label: dict[int, list] = {}
                for item, lab in zip(cyc, labels):
                    by_label.setdefault(lab, []).append(item)
                    if item[0] == PASS:
                        hist.setdefault((item[1], item[2], item[3]), set()).add(item[4])
                ordered_blocks = [
                    [i for i, l in enumerate(labels) if l == lab] for lab in sorted(by_label)
                ]
                depths = block_nesting_depths(ordered_blocks)
                for lab, items in by_label.items():
                    col = _item_color(items[0])
                    color_segments[col].extend(geo.block_edges(items, depths[lab]))
                return
            back = entry[1]
            walk(level + 1, 2 * ix, 2 * iy, back[0])
            walk(level + 1, 2 * ix + 1, 2 * iy, back[1])
            walk(level + 1, 2 * ix, 2 * iy + 1, back[2])
            walk(level + 1, 2 * ix + 1, 2 * iy + 1, back[3])

        walk(0, 0, 0, root_key)

        a, b = self.diss.shift
        trees = []
        for c in range(self.k):
            terminals = [(p.x, p.y) for p, cc in self.pi.snapped.terminals if cc == c]
            trees.append(_segments_to_tree(c, color_segments[c], terminals, (a, b)))
        histogram = {key: len(slots) for key, slots in hist.items()}
        return Forest(trees, {"algorithm": "quadtree_dp"}), histogram


def _segments_to_tree(color, segments, terminals, shift):
    """Box-coordinate segments -> PlaneTree in snapped-grid coordinates."""
    a, b = shift
    snap = 1e-9
    index: dict = {}
    vertices: list = []
    term_keys = {(round(x / snap), round(y / snap)) for x, y in terminals}

    def vid(x, y):
        key = (round(x / snap), round(y / snap))
        if key not in index:
            kind = TERMINAL if key in term_keys else STEINER
            index[key] = len(vertices)
            vertices.append((Point(x, y), kind))
        return index[key]

    edges = set()
    for (x1, y1), (x2, y2) in segments:
        u = vid(x1 - a, y1 - b)
        v = vid(x2 - a, y2 - b)
        if u != v:
            edges.add(tuple(sorted((u, v))))
    for x, y in terminals:
        vid(x, y)
    return PlaneTree(color, vertices, sorted(edges))


def _k_smallest_pairs(items_a, items_b, quota, ub=None):
    """Best (len_a + len_b, key_a, key_b) pairs of two length-sorted lists."""
    out = []
    if not items_a or not items_b:
        return out
    seen = {(0, 0)}
    heap = [(items_a[0][0] + items_b[0][0], 0, 0)]
    while heap and len(out) < quota:
        s, i, j = heapq.heappop(heap)
        if ub is not None and s > ub:
            break
        out.append((s, items_a[i][1], items_b[j][1]))
        if i + 1 < len(items_a) and (i + 1, j) not in seen:
            seen.add((i + 1, j))
            heapq.heappush(heap, (items_a[i + 1][0] + items_b[j][0], i + 1, j))
        if j + 1 < len(items_b) and (i, j + 1) not in seen:
            seen.add((i, j + 1))
            heapq.heappush(heap, (items_a[i][0] + items_b[j + 1][0], i, j + 1))
    return out


def dp_solve(
    pi: PerturbedInstance,
    d: Dissection,
    colors: int,
    r: int,
    eps: float,
    limits: DpLimits | None = None,
    upper_bound: float | None = None,
):
    """Shortest capped portal-respecting forest on the snapped instance.

    colors=2 runs 3-light, colors=3 runs 10-light (the budgets justified by
    the pass-reduction lemmas); colors=1 is the single-tree sanity mode.
    Output coordinates are snapped-grid units.
    """
    from ..geometry import SolutionReport

    if colors == 2 and r != 3:
        raise ValueError("2-color dynamic program expects r = 3")
    if colors == 3 and r != 10:
        raise ValueError("3-color dynamic program expects r = 10")
    if r <= 0:
        raise ValueError("r must be positive")
    limits = limits or DpLimits()
    engine = _DpEngine(pi, d, colors, r, limits, upper_bound=upper_bound)
    result = engine.run()
    hist_values = sorted(result.histogram.values(), reverse=True)
    if hist_values and hist_values[0] > r:
        raise AssertionError("portal pass histogram exceeded r")
    report = SolutionReport(
        per_color_length=[total_length(t) for t in result.forest.trees],
        total_length=result.forest.total_length(),
        portal_pass_histogram=hist_values,
        details={
            "m": d.m,
            "L": pi.grid_L,
            "shift": list(d.shift),
            "r": r,
            "eps": eps,
            "flags": sorted(result.flags),
            "dp_length": result.length,
            "root_entries": result.root_entry_count,
            "l_capped": pi.l_capped,
        },
    )
    return result.forest, report
