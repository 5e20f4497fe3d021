"""End-to-end solvers built on the quadtree dynamic program.

Flow: snap to the parity grid, dissect with a (seeded or exhaustive) shift,
run the capped DP, lift the solution back to the original terminals, and
keep the better of the DP result and the sequential-shell fallback.  The
fallback guarantees a valid forest even when every cap bites; the report
records which path produced the output and every cap that was hit.
"""
from __future__ import annotations

import math

from ..errors import DecomposableInstanceError, NCForestError, ResourceCapError
from ..geometry import Forest, Instance, PlaneTree, SolutionReport, forest_validate, total_length
from .dissection import build_dissection
from .dp import DpLimits, dp_solve
from .perturb import perturb_instance, unperturb_solution

DEFAULT_GRID_CAP = 16
DERANDOMIZE_MAX_L = 16


def _decomposed_solve(inst: Instance, algorithm: str):
    """Independent per-color Steiner trees for non-overlapping color boxes."""
    from ..oracle import lower_bound
    from ..steiner import steiner_tree

    trees = [steiner_tree(inst.color_points(c), color=c).tree for c in range(inst.k)]
    forest = Forest(trees, {"algorithm": algorithm, "method": "decomposed"})
    check = forest_validate(forest, inst)
    if not isinstance(check, SolutionReport):
        # overlapping hulls despite disjoint boxes should not happen; fall back
        from ..sequential import solve_sequential

        forest, _cert = solve_sequential(inst)
        check = forest_validate(forest, inst)
    report = check
    report.lower_bound = lower_bound(inst)
    report.details.update({"algorithm": algorithm, "method": "decomposed"})
    return forest, report


def _run_dp_pipeline(
    inst: Instance,
    colors: int,
    r: int,
    eps_stage: float,
    seed: int,
    derandomize: bool,
    grid_cap: int | None,
    limits: DpLimits,
):
    """Perturb, dissect, DP over one or all shifts, unperturb.

    Returns (forest, dp_details) or raises on infeasibility.
    """
    pi = perturb_instance(inst, eps_stage, colors, grid_cap=grid_cap)
    # warm upper bound from the shell solver on the snapped instance: prunes
    # everything the dp could never win with (margin leaves room for the
    # portal/nudge overhead inherent to portal-respecting routes)
    upper_bound = None
    try:
        from ..sequential import solve_sequential

        warm, _ = solve_sequential(pi.snapped)
        upper_bound = warm.total_length() * 1.2 + 1e-9
    except NCForestError:
        pass
    if derandomize:
        if pi.grid_L > DERANDOMIZE_MAX_L:
            raise ResourceCapError(
                f"derandomization over {pi.grid_L}^2 shifts exceeds the hard cap "
                f"(L <= {DERANDOMIZE_MAX_L})"
            )
        shifts = [(a, b) for a in range(pi.grid_L) for b in range(pi.grid_L)]
    else:
        d0 = build_dissection(pi, eps_stage, seed=seed)
        shifts = [d0.shift]

    best = None
    flags: set = set()
    errors = []
    for shift in shifts:
        d = build_dissection(pi, eps_stage, shift=shift)
        try:
            forest_grid, rep = dp_solve(
                pi, d, colors, r, eps_stage, limits, upper_bound=upper_bound
            )
        except (ResourceCapError, NCForestError) as exc:
            errors.append(str(exc))
            continue
        flags.update(rep.details.get("flags", []))
        if best is None or rep.total_length < best[1].total_length:
            best = (forest_grid, rep, shift)
    if best is None:
        raise ResourceCapError(
            f"dynamic program infeasible for all {len(shifts)} shifts: {errors[:2]}"
        )
    forest_grid, rep, shift = best
    lifted = unperturb_solution(forest_grid, pi, colors)
    details = dict(rep.details)
    details.update(
        {
            "shift": list(shift),
            "shifts_tried": len(shifts),
            "flags": sorted(flags),
            "snapped_length_grid": rep.total_length,
            "snapped_length_world": rep.total_length * pi.granularity,
            "unperturb_added": lifted.provenance.get("unperturb_added_length", 0.0),
            "granularity": pi.granularity,
            "l_capped": pi.l_capped,
            "formula_L": pi.formula_L,
        }
    )
    return lifted, details, rep.portal_pass_histogram


def _finish_report(
    inst: Instance, forest: Forest, details: dict, histogram=None
) -> tuple[Forest, SolutionReport]:
    from ..oracle import lower_bound

    check = forest_validate(forest, inst)
    if not isinstance(check, SolutionReport):
        raise NCForestError(f"pipeline produced an invalid forest: {[v.code for v in check][:3]}")
    report = check
    report.lower_bound = lower_bound(inst)
    report.portal_pass_histogram = histogram
    report.details.update(details)
    if report.lower_bound > 0:
        report.details["ratio_vs_lower_bound"] = report.total_length / report.lower_bound
    return forest, report


def _best_of_with_sequential(inst, dp_forest, dp_details, histogram, algorithm):
    """Keep the shorter of the DP lift and the sequential fallback."""
    from ..sequential import solve_sequential

    candidates = []
    if dp_forest is not None:
        candidates.append((dp_forest.total_length(), "dp", dp_forest, dp_details, histogram))
    try:
        seq_forest, seq_cert = solve_sequential(inst)
        candidates.append(
            (seq_forest.total_length(), "sequential-fallback", seq_forest, {}, None)
        )
    except NCForestError:
        pass
    if not candidates:
        raise NCForestError(f"{algorithm}: no valid candidate produced")
    candidates.sort(key=lambda t: t[0])
    _, method, forest, details, hist = candidates[0]
    merged = dict(dp_details or {})
    merged.update(details)
    merged["algorithm"] = algorithm
    merged["method"] = method
    merged["dp_available"] = dp_forest is not None
    if dp_forest is not None and method != "dp":
        merged["dp_length"] = dp_forest.total_length()
    return _finish_report(inst, forest, merged, hist)


def solve_ptas2(
    inst: Instance,
    eps: float = 0.5,
    seed: int = 0,
    derandomize: bool = False,
    grid_cap: int | None = DEFAULT_GRID_CAP,
    limits: DpLimits | None = None,
) -> tuple[Forest, SolutionReport]:
    """2-color pipeline: perturb, dissect, 3-light DP, unperturb.

    With disjoint color boxes the colors are solved independently.  The
    default grid cap keeps desk runs fast and is recorded (voiding the
    approximation certificate, never validity); pass grid_cap=None for the
    full prescribed grid.  The output never loses to the sequential solver:
    the shorter of the two is returned, with the winner recorded.
    """
    if inst.k != 2:
        raise ValueError("solve_ptas2 needs a 2-color instance")
    limits = limits or DpLimits()
    try:
        dp_forest, dp_details, hist = _run_dp_pipeline(
            inst, 2, 3, eps, seed, derandomize, grid_cap, limits
        )
    except DecomposableInstanceError:
        return _decomposed_solve(inst, "ptas2")
    except (ResourceCapError, NCForestError, RuntimeError) as exc:
        dp_forest, dp_details, hist = None, {"dp_error": str(exc)}, None
    eps_effective = (1 + eps) * (1 + eps) + eps - 1
    details = dict(dp_details or {})
    details.update(
        {
            "eps": eps,
            "eps_chain": "(1+eps)^2 * opt + eps * opt <= (1+eps') * opt",
            "eps_effective": eps_effective,
        }
    )
    return _best_of_with_sequential(inst, dp_forest, details, hist, "ptas2")


def solve_cest3(
    inst: Instance,
    eps: float = 0.5,
    seed: int = 0,
    grid_cap: int | None = DEFAULT_GRID_CAP,
    limits: DpLimits | None = None,
) -> tuple[Forest, SolutionReport]:
    """3-color pipeline: 10-light DP with the cube-root epsilon split.

    eps' = (1 + 3 eps / 5)^(1/3) - 1 is spent on each of the three stages
    (perturbation, portal-respecting DP, lifting back), so the end-to-end
    factor stays below 5/3 + eps when no cap truncates.
    """
    if inst.k != 3:
        raise ValueError("solve_cest3 needs a 3-color instance")
    limits = limits or DpLimits()
    eps_prime = (1.0 + 3.0 * eps / 5.0) ** (1.0 / 3.0) - 1.0
    try:
        dp_forest, dp_details, hist = _run_dp_pipeline(
            inst, 3, 10, eps_prime, seed, False, grid_cap, limits
        )
    except DecomposableInstanceError:
        return _decomposed_solve(inst, "cest3")
    except (ResourceCapError, NCForestError, RuntimeError) as exc:
        dp_forest, dp_details, hist = None, {"dp_error": str(exc)}, None
    details = dict(dp_details or {})
    details.update(
        {
            "eps": eps,
            "eps_prime": eps_prime,
            "eps_chain": "5/3 * (1+eps')^3 * opt < (5/3 + eps) * opt",
            "chain_factor": 5.0 / 3.0 * (1 + eps_prime) ** 3,
        }
    )
    return _best_of_with_sequential(inst, dp_forest, details, hist, "cest3")


def solve_single_color_dp(
    inst: Instance,
    eps: float = 0.5,
    seed: int = 0,
    grid_cap: int | None = DEFAULT_GRID_CAP,
    limits: DpLimits | None = None,
) -> tuple[Forest, SolutionReport]:
    """Single-color sanity mode of the engine (classic Steiner-tree PTAS shape)."""
    if inst.k != 1:
        raise ValueError("solve_single_color_dp needs a 1-color instance")
    limits = limits or DpLimits()
    forest, details, hist = _run_dp_pipeline(inst, 1, 3, eps, seed, False, grid_cap, limits)
    details["algorithm"] = "dp-single-color"
    return _finish_report(inst, forest, details, hist)
