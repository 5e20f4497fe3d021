import math

import pytest

from ncforest.errors import DecomposableInstanceError
from ncforest.generators import gen_random
from ncforest.geometry import (
    Forest,
    Instance,
    PlaneTree,
    SolutionReport,
    TERMINAL,
    forest_validate,
    total_length,
)
from ncforest.geometry import Point as P
from ncforest.quadtree.perturb import PARITY_MAP, perturb_instance, unperturb_solution


def overlap_2color(n_extra=0):
    pts = [(P(0, 0), 0), (P(10, 10), 0), (P(1, 9), 1), (P(9, 1), 1)]
    for i in range(n_extra):
        pts.append((P(2 + i, 5), i % 2))
    return Instance.build(pts, 2)


class TestPerturbInstance:
    def test_L_formula_interval(self):
        # 4 terminals, eps=1, 2 colors: L is the power of 2 in [16.97, 33.94]
        inst = overlap_2color()
        pi = perturb_instance(inst, eps=1.0, colors=2)
        assert pi.grid_L == 32
        assert pi.formula_L == 32
        assert not pi.l_capped

    def test_L_three_color_interval(self):
        inst = Instance.build(
            [(P(0, 0), 0), (P(10, 10), 0), (P(1, 9), 1), (P(9, 1), 1), (P(5, 5), 2)], 3
        )
        # n=5, eps=1, 3 colors: interval [49.5, 99.0] -> 64
        pi = perturb_instance(inst, eps=1.0, colors=3)
        assert pi.grid_L == 64

    def test_grid_cap_flags(self):
        inst = overlap_2color()
        pi = perturb_instance(inst, eps=0.5, colors=2, grid_cap=8)
        assert pi.grid_L == 8
        assert pi.l_capped

    def test_parities_respected(self):
        inst = overlap_2color(4)
        pi = perturb_instance(inst, eps=1.0, colors=2)
        for p, c in pi.snapped.terminals:
            row_par, col_par = PARITY_MAP[c]
            assert int(p.x) % 2 == col_par
            assert int(p.y) % 2 == row_par

    def test_terminal_already_on_grid_unchanged(self):
        inst = overlap_2color()
        pi = perturb_instance(inst, eps=1.0, colors=2)
        # (0,0) is color 0 (even/even) and exactly at the grid origin
        assert pi.back_map[0] == (0, 0)

    def test_same_color_duplicates_collapse(self):
        # two color-0 terminals closer than the grid granularity
        inst = Instance.build(
            [(P(0, 0), 0), (P(0.01, 0.01), 0), (P(10, 10), 0), (P(1, 9), 1), (P(9, 1), 1)], 2
        )
        pi = perturb_instance(inst, eps=2.0, colors=2)
        color0 = [p for p, c in pi.snapped.terminals if c == 0]
        assert len(color0) < 3

    def test_disjoint_boxes_decompose(self):
        inst = Instance.build(
            [(P(0, 0), 0), (P(1, 1), 0), (P(10, 10), 1), (P(11, 11), 1)], 2
        )
        with pytest.raises(DecomposableInstanceError) as exc:
            perturb_instance(inst, eps=1.0, colors=2)
        groups = sorted(sorted(g) for g in exc.value.groups)
        assert groups == [[0], [1]]


def grid_segment_tree(color, a, b):
    return PlaneTree(color, [(P(*a), TERMINAL), (P(*b), TERMINAL)], [(0, 1)])


class TestUnperturb:
    def test_identity_when_aligned(self):
        inst = overlap_2color()
        pi = perturb_instance(inst, eps=1.0, colors=2, grid_cap=16)
        # solve trivially on the snapped instance: straight per-color segments
        snapped = pi.snapped
        t0 = [p for p, c in snapped.terminals if c == 0]
        t1 = [p for p, c in snapped.terminals if c == 1]
        f = Forest([grid_segment_tree(0, t0[0].xy, t0[1].xy), grid_segment_tree(1, t1[0].xy, t1[1].xy)])
        check = forest_validate(f, snapped)
        if not isinstance(check, SolutionReport):
            pytest.skip("fixture trees cross on this grid; not the point of this test")
        out = unperturb_solution(f, pi, 2)
        report = forest_validate(out, inst)
        assert isinstance(report, SolutionReport)

    def test_displaced_terminal_stub(self):
        inst = Instance.build(
            [(P(0.05, 0.1), 0), (P(9.9, 10.0), 0), (P(0.9, 9.2), 1), (P(9.1, 0.8), 1)], 2
        )
        pi = perturb_instance(inst, eps=1.0, colors=2, grid_cap=8)
        snapped = pi.snapped
        t0 = [p for p, c in snapped.terminals if c == 0]
        t1 = [p for p, c in snapped.terminals if c == 1]
        f = Forest([grid_segment_tree(0, t0[0].xy, t0[1].xy), grid_segment_tree(1, t1[0].xy, t1[1].xy)])
        if not isinstance(forest_validate(f, snapped), SolutionReport):
            pytest.skip("fixture trees cross on this grid")
        out = unperturb_solution(f, pi, 2)
        report = forest_validate(out, inst)
        assert isinstance(report, SolutionReport), report
        assert out.provenance["unperturb_added_length"] > 0

    def test_crossing_stub_reroutes_other_tree(self):
        # red path on y=0 grid line; blue terminal displaced so its stub
        # must cross red; red gets cut and railed around the stub
        inst = Instance.build(
            [(P(0, 0), 0), (P(8, 0.0), 0), (P(4.1, -2.0), 1), (P(3.9, 2.1), 1)], 2
        )
        pi = perturb_instance(inst, eps=2.0, colors=2, grid_cap=8)
        snapped = pi.snapped
        t0 = [p for p, c in snapped.terminals if c == 0]
        t1 = [p for p, c in snapped.terminals if c == 1]
        f = Forest([grid_segment_tree(0, t0[0].xy, t0[1].xy), grid_segment_tree(1, t1[0].xy, t1[1].xy)])
        if not isinstance(forest_validate(f, snapped), SolutionReport):
            pytest.skip("snapped fixture already crossing")
        out = unperturb_solution(f, pi, 2)
        report = forest_validate(out, inst)
        assert isinstance(report, SolutionReport), report

    @pytest.mark.parametrize("seed", range(8))
    def test_random_roundtrip_validates(self, seed):
        from ncforest.sequential import solve_sequential

        inst = gen_random(n=8, k=2, seed=seed)
        pi = perturb_instance(inst, eps=1.0, colors=2, grid_cap=8)
        snapped_forest, _ = solve_sequential(pi.snapped)
        out = unperturb_solution(snapped_forest, pi, 2)
        report = forest_validate(out, inst)
        assert isinstance(report, SolutionReport), report
        # added length accounted and bounded by the rail construction
        added = out.provenance["unperturb_added_length"]
        assert added >= 0
