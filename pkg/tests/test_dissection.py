import math

import pytest

from ncforest.geometry import Instance
from ncforest.geometry import Point as P
from ncforest.quadtree.dissection import (
    HORIZONTAL,
    VERTICAL,
    build_dissection,
    portal_snapping_cost,
)
from ncforest.quadtree.perturb import perturb_instance


def make_pi(eps=1.0, grid_cap=None):
    inst = Instance.build(
        [(P(0, 0), 0), (P(10, 10), 0), (P(1, 9), 1), (P(9, 1), 1)], 2
    )
    return perturb_instance(inst, eps=eps, colors=2, grid_cap=grid_cap)


class TestDissection:
    def test_m_formula(self):
        pi = make_pi(eps=1.0)  # L = 32, so L' = 64
        d = build_dissection(pi, eps=1.0, shift=(0, 0))
        assert d.m == math.ceil(4 * math.log2(64) / 1.0) == 24

    def test_leaves_are_unit_cells(self):
        pi = make_pi(eps=1.0, grid_cap=8)
        d = build_dissection(pi, eps=1.0, shift=(0, 0))
        assert d.side_at(d.depth) == 1
        assert d.box_side == 2 * pi.grid_L

    def test_line_levels(self):
        pi = make_pi(eps=1.0, grid_cap=8)  # L = 8, box 16, depth 4
        d = build_dissection(pi, eps=1.0, shift=(0, 0))
        assert d.line_level(0) == 0
        assert d.line_level(16) == 0
        assert d.line_level(8) == 1
        assert d.line_level(4) == 2
        assert d.line_level(2) == 3
        assert d.line_level(1) == 4
        assert d.line_level(3) == 4

    def test_portal_counts_by_level(self):
        pi = make_pi(eps=1.0, grid_cap=8)
        d = build_dissection(pi, eps=1.0, shift=(0, 0))
        for u in (1, 2, 4, 8, 16):
            i = d.line_level(u)
            assert len(d.formula_portals(u)) == (1 << i) * d.m

    def test_portals_avoid_corners(self):
        pi = make_pi(eps=1.0, grid_cap=8)
        d = build_dissection(pi, eps=1.0, shift=(0, 0))
        for u in range(0, d.box_side + 1):
            for _, t in d.formula_portals(u):
                frac = abs(t - round(t))
                assert frac > 1e-6

    def test_chosen_within_caps(self):
        pi = make_pi(eps=0.5, grid_cap=16)
        d = build_dissection(pi, eps=0.5, shift=(3, 5))
        for u in range(0, d.box_side + 1):
            chosen = d.chosen_portals(VERTICAL, u, m_cap=4, leaf_m=2)
            i = d.line_level(u)
            side = d.side_at(i)
            # per top extent
            for j in range(d.box_side // side):
                cnt = sum(1 for _, t in chosen if j * side <= t < (j + 1) * side)
                assert cnt <= 4
            # per unit cell
            for cell in range(d.box_side):
                cnt = sum(1 for _, t in chosen if cell <= t < cell + 1)
                assert cnt <= 2

    def test_shift_seed_deterministic(self):
        pi = make_pi()
        d1 = build_dissection(pi, eps=1.0, seed=11)
        d2 = build_dissection(pi, eps=1.0, seed=11)
        assert d1.shift == d2.shift
        assert 0 <= d1.shift[0] < pi.grid_L

    def test_bad_shift_rejected(self):
        pi = make_pi()
        with pytest.raises(ValueError):
            build_dissection(pi, eps=1.0, shift=(pi.grid_L, 0))


class TestLevelStatistics:
    def test_level_probability_bound(self):
        # over all shifts a, Pr[level(u = X + a) = i] <= 2^i / L'
        pi = make_pi(eps=1.0, grid_cap=8)
        L = pi.grid_L
        L2 = 2 * L
        for X in (0, 1, 5, 7):
            counts = {}
            for a in range(L):
                d = build_dissection(pi, eps=1.0, shift=(a, 0))
                lvl = d.line_level(X + a)
                counts[lvl] = counts.get(lvl, 0) + 1
            # the expectation argument sums levels i >= 1; level 0 is the
            # box boundary and is excluded
            for lvl, cnt in counts.items():
                if lvl >= 1:
                    assert cnt / L <= (2**lvl) / L2 + 1e-12


class TestSnappingCost:
    def test_single_crossing_cost(self):
        pi = make_pi(eps=1.0, grid_cap=8)
        d = build_dissection(pi, eps=1.0, shift=(0, 0))
        # vertical segment crossing one horizontal grid line at y=3
        seg = ((2.5, 2.5), (2.5, 3.5))
        cost = portal_snapping_cost(d, [seg])
        u = 3 + d.shift[1]
        portals = d.formula_portals(u)
        expected = 2 * min(abs((2.5 + d.shift[0]) - t) for _, t in portals)
        assert cost == pytest.approx(expected)

    def test_cost_nonnegative_and_moderate(self):
        pi = make_pi(eps=1.0, grid_cap=8)
        d = build_dissection(pi, eps=1.0, shift=(2, 3))
        segs = [((0.0, 0.0), (8.0, 8.0)), ((1.0, 7.0), (7.0, 1.0))]
        cost = portal_snapping_cost(d, segs)
        assert cost >= 0
        total = sum(math.dist(a, b) for a, b in segs)
        # each unit of length crosses ~2 lines, each costing at most a portal gap
        assert cost <= 4 * (total + 2) * 1.0
