"""Instance generators: random/clustered families and adversarial families.

The adversarial families reconstruct the shapes of known hard instances
(barrier mazes, spirals, forced-bend pinwheels).  Coordinates are our own;
the instances carry ``inspired_by_figure`` metadata and are never used as
ground-truth optima.
"""
from __future__ import annotations

import random

from .geometry import Instance, Point


def _build(terminals, k, name, seed, inspired=None) -> Instance:
    meta = {"generator": name, "seed": seed}
    if inspired:
        meta["inspired_by_figure"] = inspired
    return Instance.build(terminals, k, metadata=meta)


def gen_random(n: int, k: int, seed: int) -> Instance:
    """n uniform points in the unit square, colors round-robin then shuffled."""
    if n < k or k < 1:
        raise ValueError("need n >= k >= 1")
    rng = random.Random(seed)
    colors = [i % k for i in range(n)]
    rng.shuffle(colors)
    terminals = []
    used = set()
    for c in colors:
        while True:
            p = Point(rng.uniform(0, 1), rng.uniform(0, 1))
            if p.xy not in used:
                used.add(p.xy)
                break
        terminals.append((p, c))
    return _build(terminals, k, "random", seed)


def gen_clustered(n: int, k: int, seed: int, spread: float = 0.05) -> Instance:
    """k well-separated clusters, one color each."""
    if n < k or k < 1:
        raise ValueError("need n >= k >= 1")
    rng = random.Random(seed)
    centers = [Point(3.0 * i, 0.0) for i in range(k)]
    terminals = []
    for i in range(n):
        c = i % k
        ctr = centers[c]
        terminals.append(
            (Point(ctr.x + rng.uniform(-spread, spread), ctr.y + rng.uniform(-spread, spread)), c)
        )
    return _build(terminals, k, "clustered", seed)


def gen_maze(colors: int, seed: int) -> Instance:
    """One black pair behind a weave of barrier pairs.

    Barrier i is a vertical pair whose straight-line tree blocks the corridor
    alternately from the bottom and from the top, so the black path must
    weave and its length grows with the number of barriers.
    """
    if colors < 2:
        raise ValueError("gen_maze needs colors >= 2")
    rng = random.Random(seed)
    jitter = lambda: rng.uniform(-0.01, 0.01)
    terminals = [(Point(0.0, 0.5 + jitter()), 0), (Point(1.0, 0.5 + jitter()), 0)]
    m = colors - 1
    for i in range(1, m + 1):
        x = i / (m + 1) + jitter() * 0.1
        if i % 2 == 1:
            lo, hi = 0.02, 0.85
        else:
            lo, hi = 0.15, 0.98
        terminals.append((Point(x, lo + jitter()), i))
        terminals.append((Point(x, hi + jitter()), i))
    return _build(terminals, colors, "maze", seed, inspired="barrier-maze")


def gen_spiral(seed: int) -> Instance:
    """Three interleaved spiral arms, two terminals per color."""
    import math

    rng = random.Random(seed)
    terminals = []
    turns = 1.25
    for c in range(3):
        theta0 = 2 * math.pi * c / 3 + rng.uniform(-0.05, 0.05)
        r_in, r_out = 0.12, 1.0
        for t, r in ((0.0, r_in), (turns * 2 * math.pi, r_out)):
            ang = theta0 + t
            terminals.append((Point(r * math.cos(ang), r * math.sin(ang)), c))
    return _build(terminals, 3, "spiral", seed, inspired="tri-color-spiral")


def gen_double_segment(seed: int) -> Instance:
    """Black terminals on both sides of a barrier pocket.

    The barrier pair's straight tree leaves only one narrow way in and out of
    the pocket, so the black curve traverses the same corridor twice.
    """
    rng = random.Random(seed)
    j = lambda: rng.uniform(-0.005, 0.005)
    terminals = [
        (Point(0.0 + j(), 0.0 + j()), 0),
        (Point(2.0 + j(), 0.0 + j()), 0),
        (Point(1.0 + j(), 0.9 + j()), 0),
        (Point(0.35 + j(), 1.0 + j()), 1),
        (Point(1.65 + j(), 1.0 + j()), 1),
    ]
    return _build(terminals, 2, "double_segment", seed, inspired="reused-corridor")


def gen_no_straight(seed: int) -> Instance:
    """Pinwheel of crossing pairs: every optimal tree has to bend."""
    import math

    rng = random.Random(seed)
    k = 3
    terminals = []
    for c in range(k):
        ang = math.pi * c / k + rng.uniform(-0.03, 0.03)
        dx, dy = math.cos(ang), math.sin(ang)
        terminals.append((Point(-dx, -dy), c))
        terminals.append((Point(dx, dy), c))
    return _build(terminals, k, "no_straight", seed, inspired="pinwheel")


GENERATORS = {
    "random": gen_random,
    "clustered": gen_clustered,
    "maze": gen_maze,
    "spiral": gen_spiral,
    "double-segment": gen_double_segment,
    "no-straight": gen_no_straight,
}
