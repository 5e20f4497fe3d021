import math

import pytest

from ncforest.generators import gen_clustered, gen_random
from ncforest.geometry import (
    Forest,
    Instance,
    SolutionReport,
    forest_validate,
    total_length,
)
from ncforest.geometry import Point as P
from ncforest.sequential import solve_sequential
from ncforest.steiner import steiner_tree


class TestSolveSequential:
    def test_far_apart_clusters_no_shells(self):
        inst = gen_clustered(8, 4, seed=1)
        forest, cert = solve_sequential(inst)
        assert isinstance(forest_validate(forest, inst), SolutionReport)
        # no crossings ever, so every tree keeps its base Steiner length
        assert cert.slack_total == 0.0
        for p_len, s_len in zip(cert.p_lengths, cert.s_lengths):
            assert s_len == pytest.approx(p_len)

    def test_crossing_pair(self):
        inst = Instance.build(
            [(P(0, 0), 0), (P(2, 0), 0), (P(1, -1), 1), (P(1, 1), 1)], 2
        )
        forest, cert = solve_sequential(inst)
        assert isinstance(forest_validate(forest, inst), SolutionReport)
        # blue (length 2) is placed first and untouched, red pays the shell
        assert cert.p_lengths[0] == pytest.approx(2.0)
        assert cert.s_lengths[0] == pytest.approx(2.0)
        assert cert.s_lengths[1] <= 2.0 + 2 * 2.0 + cert.slacks[1] + 1e-9
        assert cert.holds()

    def test_k1_equals_steiner_tree(self):
        pts = [P(0, 0), P(1, 0), P(0.5, math.sqrt(3) / 2)]
        inst = Instance.build([(p, 0) for p in pts], 1)
        forest, cert = solve_sequential(inst)
        expected = steiner_tree(pts).length
        assert forest.total_length() == pytest.approx(expected)

    @pytest.mark.parametrize("seed", range(12))
    def test_random_instances_validate_and_certify(self, seed):
        inst = gen_random(n=10 + (seed % 6), k=2 + (seed % 3), seed=seed)
        forest, cert = solve_sequential(inst)
        assert isinstance(forest_validate(forest, inst), SolutionReport)
        assert cert.holds()
        # slack small relative to the Steiner mass
        assert cert.slack_total <= 1e-2 * sum(cert.p_lengths)

    def test_color_permutation_invariance(self):
        inst = gen_random(n=9, k=3, seed=4)
        permuted = Instance.build(
            [(pt, (c + 1) % 3) for pt, c in inst.terminals], 3
        )
        f1, _ = solve_sequential(inst)
        f2, _ = solve_sequential(permuted)
        assert f1.total_length() == pytest.approx(f2.total_length(), rel=1e-9)
