"""Versioned JSON formats for instances, forests, and reports.

All files carry a ``"format": "ncforest-v1"`` field.
"""
from __future__ import annotations

import json
from pathlib import Path

from .geometry import (
    CertificateEntry,
    Forest,
    Instance,
    PlaneTree,
    Point,
    SolutionReport,
)

FORMAT = "ncforest-v1"


def _check_format(data: dict, what: str) -> None:
    if not isinstance(data, dict) or data.get("format") != FORMAT:
        raise ValueError(f"{what}: expected a JSON object with format={FORMAT!r}")


def instance_to_json(inst: Instance) -> dict:
    return {
        "format": FORMAT,
        "k": inst.k,
        "terminals": [{"x": p.x, "y": p.y, "color": c} for p, c in inst.terminals],
        "metadata": inst.metadata,
    }


def instance_from_json(data: dict) -> Instance:
    _check_format(data, "instance")
    terminals = [(Point(float(t["x"]), float(t["y"])), int(t["color"])) for t in data["terminals"]]
    return Instance.build(terminals, int(data["k"]), data.get("metadata") or {})


def forest_to_json(forest: Forest, k: int | None = None) -> dict:
    return {
        "format": FORMAT,
        "k": k if k is not None else len(forest.trees),
        "trees": [
            {
                "color": t.color,
                "vertices": [{"x": p.x, "y": p.y, "kind": kind} for p, kind in t.vertices],
                "edges": [list(e) for e in t.edges],
            }
            for t in forest.trees
        ],
        "provenance": forest.provenance,
    }


def forest_from_json(data: dict) -> Forest:
    _check_format(data, "forest")
    trees = []
    for td in data["trees"]:
        vertices = [(Point(float(v["x"]), float(v["y"])), str(v["kind"])) for v in td["vertices"]]
        edges = [(int(i), int(j)) for i, j in td["edges"]]
        trees.append(PlaneTree(int(td["color"]), vertices, edges))
    return Forest(trees, data.get("provenance") or {})


def report_to_json(report: SolutionReport) -> dict:
    return {
        "format": FORMAT,
        "per_color_length": report.per_color_length,
        "total_length": report.total_length,
        "lower_bound": report.lower_bound,
        "certificate": [
            {"inequality": e.inequality, "lhs": e.lhs, "rhs": e.rhs, "slack": e.slack}
            for e in report.certificate
        ],
        "portal_pass_histogram": report.portal_pass_histogram,
        "details": report.details,
    }


def report_from_json(data: dict) -> SolutionReport:
    _check_format(data, "report")
    return SolutionReport(
        per_color_length=[float(x) for x in data["per_color_length"]],
        total_length=float(data["total_length"]),
        lower_bound=float(data.get("lower_bound", 0.0)),
        certificate=[
            CertificateEntry(e["inequality"], float(e["lhs"]), float(e["rhs"]), float(e["slack"]))
            for e in data.get("certificate", [])
        ],
        portal_pass_histogram=data.get("portal_pass_histogram"),
        details=data.get("details") or {},
    )


def save_json(data: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def canonical_dumps(data: dict) -> str:
    """Stable serialization used for hashing and regression fixtures."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def instance_hash(inst: Instance) -> str:
    import hashlib

    payload = instance_to_json(inst)
    payload.pop("metadata", None)
    return hashlib.sha256(canonical_dumps(payload).encode()).hexdigest()
