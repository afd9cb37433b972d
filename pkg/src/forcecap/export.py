"""Polytope serialization: JSON (all dimensions), OFF meshes (3-D) and vertex CSV."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .geometry import Ellipsoid, Polytope, hull
from .vertex_search import SearchStats, VertexSet


def polytope_document(vs: VertexSet, axes, kind: str, *, facets=None, params: dict | None = None,
                      ellipsoid: Ellipsoid | None = None) -> dict:
    doc = {
        "task_dim": vs.task_dim,
        "axes": list(axes),
        "kind": kind,
        "vertices": [[float(x) for x in v] for v in vs.vertices],
    }
    if facets is not None:
        doc["facets"] = [list(map(int, f)) for f in facets]
    doc["stats"] = {k: v for k, v in vs.stats.as_dict().items() if k != "raw_hits"}
    if ellipsoid is not None:
        doc["ellipsoid"] = {"center": ellipsoid.center.tolist(), "shape": ellipsoid.shape.tolist()}
    if params:
        doc["params"] = params
    return doc


def to_json(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def read_polytope_json(source: str | Path | dict) -> tuple[VertexSet, dict]:
    """Parse a polytope document back into a VertexSet (vertex values are bit-exact)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text(encoding="utf-8") if not str(source).lstrip().startswith("{") \
            else str(source)
        doc = json.loads(text)
    for key in ("task_dim", "vertices"):
        if key not in doc:
            raise ValueError(f"polytope document lacks {key!r}")
    stats = doc.get("stats", {})
    vs = VertexSet(int(doc["task_dim"]), np.array(doc["vertices"], dtype=float).reshape(-1, int(doc["task_dim"])),
                   SearchStats(faces_total=stats.get("faces_total", 0),
                               faces_pruned_bounds=stats.get("faces_pruned_bounds", 0),
                               faces_singular=stats.get("faces_singular", 0),
                               systems_solved=stats.get("systems_solved", 0),
                               runtime_ns=stats.get("runtime_ns", 0)))
    return vs, doc


def to_off(P: Polytope) -> str:
    if P.dim != 3:
        raise ValueError("OFF export needs a 3-D polytope")
    if P.facets is None:
        raise ValueError("polytope is degenerate; no facets to export")
    lines = ["OFF", f"{len(P.vertices)} {len(P.facets)} 0"]
    lines += [" ".join(repr(float(x)) for x in v) for v in P.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in P.facets]
    return "\n".join(lines) + "\n"


def read_off(text: str) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    tokens = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if tokens[0] != ["OFF"]:
        raise ValueError("not an OFF file")
    nv, nf = int(tokens[1][0]), int(tokens[1][1])
    verts = np.array([[float(x) for x in t] for t in tokens[2:2 + nv]])
    faces = [tuple(int(x) for x in t[1:1 + int(t[0])]) for t in tokens[2 + nv:2 + nv + nf]]
    return verts, faces


def to_csv(vs: VertexSet, axes) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(axes))
    for v in vs.vertices:
        writer.writerow([repr(float(x)) for x in v])
    return buf.getvalue()


def facets_for(vs: VertexSet):
    """Facet index tuples in the VertexSet's own vertex order (None when degenerate or 1-D)."""
    if vs.task_dim not in (2, 3) or len(vs) < vs.task_dim + 1:
        return None
    P = hull(vs.vertices)
    if P.facets is None:
        return None
    lookup = [int(np.argmin(np.linalg.norm(vs.vertices - v, axis=1))) for v in P.vertices]
    return [tuple(lookup[i] for i in f) for f in P.facets]
