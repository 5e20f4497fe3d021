"""Sequential shell pipelines for general k.

``solve_sequential`` builds per-color Steiner trees, orders them by length,
and reroutes each around the union of the already-placed ones.  Per run it
emits a certificate with the achieved per-color inequalities.

``solve_even_k`` (even k only) merges the colors into two super-colors,
solves the 2-color instance, and replaces each super-tree by one pruned
subtree plus nested cut-open rings, one ring per remaining color.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from shapely.geometry import Point as ShPoint

from .errors import ShellError
from .geometry import (
    CertificateEntry,
    Forest,
    Instance,
    PlaneTree,
    Point,
    STEINER,
    SolutionReport,
    TERMINAL,
    forest_validate,
    total_length,
)
from .shell import (
    ShellParams,
    _tree_geometry,
    excise_disk,
    layered_shell,
    shell_reroute,
    trees_cross,
)
from .steiner import steiner_subtree_prune, steiner_tree

_RETRIES = 4


@dataclass
class SequentialCertificate:
    """Achieved-value restatement of the sequential length bounds."""

    colors_order: list[int]
    p_lengths: list[float]  # per-color Steiner lengths, non-decreasing
    s_lengths: list[float]  # final lengths, same order
    slacks: list[float]
    entries: list[CertificateEntry] = field(default_factory=list)

    @property
    def slack_total(self) -> float:
        return sum(self.slacks)

    def holds(self, tol: float = 1e-9) -> bool:
        return all(e.holds(tol) for e in self.entries)


def _build_certificate(order, p_lengths, s_lengths, slacks) -> SequentialCertificate:
    entries = []
    prefix = 0.0
    for i, (p_len, s_len, slack) in enumerate(zip(p_lengths, s_lengths, slacks)):
        entries.append(
            CertificateEntry(
                inequality=f"S_{i + 1} <= P_{i + 1} + 2*sum(P_1..P_{i}) + slack",
                lhs=s_len,
                rhs=p_len + 2.0 * prefix,
                slack=slack,
            )
        )
        prefix += p_len
    entries.append(
        CertificateEntry(
            inequality="total <= k * sum(P) + slack_total",
            lhs=sum(s_lengths),
            rhs=len(p_lengths) * sum(p_lengths),
            slack=sum(slacks),
        )
    )
    return SequentialCertificate(
        colors_order=order,
        p_lengths=p_lengths,
        s_lengths=s_lengths,
        slacks=slacks,
        entries=entries,
    )


def solve_sequential(
    inst: Instance, p: ShellParams | None = None
) -> tuple[Forest, SequentialCertificate]:
    """Shell-based solver: place trees shortest-first, reroute around the rest.

    The i-th placed tree satisfies S_i <= P_i + 2*sum_{j<i} P_j + slack_i,
    where slack_i is the measured outline overhead (zero when no shell was
    needed).  Output always passes forest_validate.
    """
    params = p or ShellParams.for_instance(inst)
    base = [steiner_tree(inst.color_points(c), color=c) for c in range(inst.k)]
    min_gap = _min_terminal_gap(inst)

    last_error: Exception | None = None
    for attempt in range(_RETRIES):
        delta = params.delta / (4.0**attempt)
        try:
            forest, cert = _sequential_pass(
                inst, base, ShellParams(delta, params.max_refine), min_gap
            )
        except ShellError as exc:
            last_error = exc
            continue
        result = forest_validate(forest, inst)
        if isinstance(result, SolutionReport):
            forest.provenance = {
                "algorithm": "sequential",
                "delta": delta,
                "order": cert.colors_order,
            }
            return forest, cert
        last_error = ShellError(f"validation failed: {[v.code for v in result]}")
    raise ShellError(f"sequential solver failed after {_RETRIES} retries: {last_error}")


def _clear_foreign_terminals(tree: PlaneTree, foreign: list[Point], rho: float, params):
    """Excise small disks around foreign terminals the tree comes close to."""
    geom = _tree_geometry(tree)
    for t in foreign:
        if geom.distance(ShPoint(t.xy)) < rho:
            tree = excise_disk(tree, t, rho, params)
            geom = _tree_geometry(tree)
    return tree


def _sequential_pass(inst, base, params, min_gap):
    rho = min(3.0 * params.delta, min_gap / 3.0)
    trees = []
    for c in range(inst.k):
        foreign = [pt for pt, cc in inst.terminals if cc != c]
        trees.append(_clear_foreign_terminals(base[c].tree, foreign, rho, params))

    order = sorted(range(inst.k), key=lambda c: (total_length(trees[c]), c))
    placed: list[PlaneTree] = []
    p_lengths: list[float] = []
    s_lengths: list[float] = []
    slacks: list[float] = []
    for c in order:
        tree = trees[c]
        p_len = total_length(tree)
        if placed and trees_cross(tree, placed):
            res = shell_reroute(tree, placed, params)
            tree = res.tree
            slack = max(0.0, res.outline_length - 2.0 * sum(p_lengths))
        else:
            slack = 0.0
        placed.append(tree)
        p_lengths.append(p_len)
        s_lengths.append(total_length(tree))
        slacks.append(slack)
    forest = Forest(sorted(placed, key=lambda t: t.color))
    return forest, _build_certificate(order, p_lengths, s_lengths, slacks)


def _rekind(tree: PlaneTree, terminal_points: list[Point], tol: float) -> PlaneTree:
    """Set TERMINAL kind exactly on the given points, STEINER elsewhere."""
    vertices = []
    for pt, _kind in tree.vertices:
        kind = TERMINAL if any(pt.dist(t) <= tol for t in terminal_points) else STEINER
        vertices.append((pt, kind))
    return PlaneTree(tree.color, vertices, list(tree.edges))


def _super_instance(inst: Instance, first_half: set[int]) -> Instance:
    terminals = [(pt, 0 if c in first_half else 1) for pt, c in inst.terminals]
    return Instance.build(terminals, 2, metadata={"merged_from": inst.k})


def solve_even_k(
    inst: Instance, eps: float = 0.5, p: ShellParams | None = None
) -> tuple[Forest, SolutionReport]:
    """Even-k solver: 2-color solve on merged colors, then subtree plus rings.

    Per super-color the first color keeps a pruned subtree of the super-tree
    (|R_1| <= |S_1|); every further color gets a cut-open ring around the
    group's structure with spikes to its terminals (|R_i| <= 2|S_1| + slack).
    """
    if inst.k < 2 or inst.k % 2 != 0:
        raise ValueError("solve_even_k needs an even color count k >= 2")
    from .quadtree.pipelines import solve_ptas2

    if inst.k == 2:
        return solve_ptas2(inst, eps)

    m = inst.k // 2
    first_half = set(range(m))
    eps_prime = eps / (inst.k - 1)
    super_inst = _super_instance(inst, first_half)
    super_forest, super_report = solve_ptas2(super_inst, eps_prime)

    s_trees = [super_forest.tree_for(0), super_forest.tree_for(1)]
    clearance = _tree_geometry(s_trees[0]).distance(_tree_geometry(s_trees[1]))
    groups = [list(range(m)), list(range(m, inst.k))]

    base_delta = (p or ShellParams.for_instance(inst)).delta
    min_gap = _min_terminal_gap(inst)
    delta0 = min(base_delta, clearance / (6 * m + 12) if clearance > 0 else base_delta,
                 min_gap / (8 * m + 16))

    last_error: Exception | None = None
    for attempt in range(_RETRIES):
        delta = delta0 / (3.0**attempt)
        if delta <= 0:
            break
        try:
            forest, report = _even_k_pass(inst, groups, s_trees, ShellParams(delta), m)
        except ShellError as exc:
            last_error = exc
            continue
        check = forest_validate(forest, inst)
        if isinstance(check, SolutionReport):
            report.per_color_length = check.per_color_length
            report.total_length = check.total_length
            report.details.update(
                {
                    "algorithm": "even-k",
                    "delta": delta,
                    "eps": eps,
                    "eps_prime": eps_prime,
                    "super_total": sum(total_length(t) for t in s_trees),
                    "super_report": super_report.details,
                }
            )
            forest.provenance = {"algorithm": "even-k", "delta": delta, "eps": eps}
            return forest, report
        last_error = ShellError(f"validation failed: {[v.code for v in check]}")
    raise ShellError(f"even-k solver failed after {_RETRIES} retries: {last_error}")


def _min_terminal_gap(inst: Instance) -> float:
    pts = [pt for pt, _ in inst.terminals]
    best = inst.diameter or 1.0
    for i, a in enumerate(pts):
        for b in pts[i + 1 :]:
            d = a.dist(b)
            if d > 0:
                best = min(best, d)
    return best


def _even_k_pass(inst, groups, s_trees, params, m):
    certificate: list[CertificateEntry] = []
    all_trees: list[PlaneTree] = []
    s_len_report = []
    tol = inst.tolerance

    for g_idx, group in enumerate(groups):
        s_tree = PlaneTree(group[0], list(s_trees[g_idx].vertices), list(s_trees[g_idx].edges))
        later_terms = [pt for c in group[1:] for pt in inst.color_points(c)]

        # keep the scaffold clear of the terminals that later rings must reach
        rho = (2 * m + 8) * params.delta
        geom = _tree_geometry(s_tree)
        for t in later_terms:
            if geom.distance(ShPoint(t.xy)) < rho:
                s_tree = excise_disk(s_tree, t, rho, params)
                geom = _tree_geometry(s_tree)
        s_len = total_length(s_tree)
        s_len_report.append(s_len)

        first_pts = inst.color_points(group[0])
        r_first = steiner_subtree_prune(s_tree, first_pts, tol=1e-9)
        r_first = _rekind(r_first, first_pts, tol)
        r_first.color = group[0]
        certificate.append(
            CertificateEntry("R_1 <= S_1", total_length(r_first), s_len, 0.0)
        )
        built = [r_first]
        for color in group[1:]:
            through = inst.color_points(color)
            res = layered_shell(built, through, params, layer=1)
            ring_tree = res.tree
            ring_tree.color = color
            ring_tree = _rekind(ring_tree, through, tol)
            r_len = total_length(ring_tree)
            slack = max(0.0, r_len - 2.0 * s_len)
            certificate.append(
                CertificateEntry(f"R_{color} <= 2*S_1 + slack", r_len, 2.0 * s_len, slack)
            )
            built.append(ring_tree)
        all_trees.extend(built)

    total = sum(total_length(t) for t in all_trees)
    super_total = sum(s_len_report)
    slack_total = sum(e.slack for e in certificate)
    certificate.append(
        CertificateEntry(
            "total <= (k-1)*|S*| + slack",
            total,
            (inst.k - 1) * super_total,
            slack_total,
        )
    )
    forest = Forest(sorted(all_trees, key=lambda t: t.color))
    report = SolutionReport(
        per_color_length=[total_length(forest.tree_for(c)) for c in range(inst.k)],
        total_length=total,
        certificate=certificate,
        details={"s_lengths": s_len_report},
    )
    return forest, report
