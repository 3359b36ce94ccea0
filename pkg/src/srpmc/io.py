"""CSV and JSON artifacts.

CSV files use ``,`` as separator, ``.`` as decimal mark and 17 significant
digits, so every double round-trips exactly.  Graph files list ``x, t, u``
with ``t`` varying fastest.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .graph import GraphDomain, IntrinsicGraph
from .variation import ParamSurface

__all__ = [
    "fmt",
    "write_csv",
    "write_graph_csv",
    "read_graph_csv",
    "write_curve_csv",
    "write_surface_csv",
    "read_surface_csv",
    "write_json",
    "to_jsonable",
]

CURVE_HEADER = ["s", "t", "q", "M", "K", "dM_ds_minus_K"]


def fmt(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_graph_csv(path, graph: IntrinsicGraph):
    X, T = graph.domain.mesh()
    rows = np.column_stack([X.ravel(), T.ravel(), graph.u.ravel()])
    write_csv(path, ["x", "t", "u"], rows)


def read_graph_csv(path) -> IntrinsicGraph:
    """Inverse of :func:`write_graph_csv`; the grid must be uniform and complete."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ValueError(f"{path}: expected columns x,t,u")
    xs = np.unique(data[:, 0])
    ts = np.unique(data[:, 1])
    if len(xs) * len(ts) != len(data) or len(xs) < 3 or len(ts) < 3:
        raise ValueError(f"{path}: samples do not form a full grid of at least 3x3 nodes")
    order = np.lexsort((data[:, 1], data[:, 0]))
    u = data[order, 2].reshape(len(xs), len(ts))
    domain = GraphDomain(xs[0], xs[-1], ts[0], ts[-1], len(xs), len(ts))
    if not (np.allclose(domain.x, xs, atol=1e-12) and np.allclose(domain.t, ts, atol=1e-12)):
        raise ValueError(f"{path}: grid is not uniform")
    return IntrinsicGraph.from_samples(domain, u)


def write_curve_csv(path, table):
    """``table`` as produced by :func:`srpmc.curves.curve_table`."""
    write_csv(path, CURVE_HEADER, table)


def write_surface_csv(path, surface: ParamSurface):
    S1, S2 = surface.mesh()
    P, _, _ = surface.samples()
    rows = np.column_stack([S1.ravel(), S2.ravel(), P.reshape(-1, 3)])
    write_csv(path, ["s1", "s2", "x", "y", "t"], rows)


def read_surface_csv(path, orientation=1) -> ParamSurface:
    return ParamSurface.read_csv(path, orientation)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
