"""CSV writers for transient traces, envelope surfaces, grids and frequencies.

Every file starts with a header row and numbers use 17 significant digits,
so doubles round-trip exactly and identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .envelope import EnvelopeResult
from .exceptions import ExportError
from .splines import SplineCurve, evaluate

__all__ = [
    "FLOAT_FORMAT",
    "resolve_nodes",
    "export_transient",
    "export_periodic",
    "export_surface",
    "export_grid",
    "export_omega",
]

FLOAT_FORMAT = "%.17g"


def _num(x) -> str:
    return FLOAT_FORMAT % float(x)


def _open(path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def resolve_nodes(names, requested=None) -> list:
    """Indices of ``requested`` in ``names``; ``out`` matches ``v(out)``.

    ``None`` selects every variable.
    """
    if requested is None:
        return list(range(len(names)))
    lookup = {n.lower(): i for i, n in enumerate(names)}
    out = []
    for r in requested:
        key = r.strip().lower()
        i = lookup.get(key, lookup.get(f"v({key})"))
        if i is None:
            raise ExportError(f"unknown node {r!r}; available: {', '.join(names)}")
        out.append(i)
    return out


def _write_table(path, header, t, X):
    fh, w = _open(path)
    with fh:
        w.writerow(header)
        for ti, row in zip(t, X):
            w.writerow([_num(ti)] + [_num(v) for v in row])


def export_transient(path, t, X, names, nodes=None) -> None:
    """Wide table ``t,<name>,...``."""
    idx = resolve_nodes(names, nodes)
    X = np.asarray(X)
    _write_table(path, ["t"] + [names[i] for i in idx], t, X[:, idx])


def export_periodic(path, curve: SplineCurve, names, samples: int = 64, nodes=None) -> None:
    """One period of a periodic spline solution as a wide table."""
    if samples < 1:
        raise ExportError("samples per period must be positive")
    g = curve.grid
    t = g.start + g.period * np.arange(samples) / samples
    export_transient(path, t, evaluate(curve, t), names, nodes)


def export_surface(path, result: EnvelopeResult, nodes=None, samples: int = 64) -> None:
    """Long format ``tau,t,node,value`` with ``samples`` points per period."""
    if samples < 1:
        raise ExportError("samples per period must be positive")
    names = result.variable_names
    idx = resolve_nodes(names, nodes)
    fh, w = _open(path)
    with fh:
        w.writerow(["tau", "t", "node", "value"])
        for rec in result.records:
            g = rec.curve.grid
            t = g.start + g.period * np.arange(samples) / samples
            X = evaluate(rec.curve, t)
            tau = _num(rec.tau)
            for i in idx:
                for tj, v in zip(t, X[:, i]):
                    w.writerow([tau, _num(tj), names[i], _num(v)])


def export_grid(path, result: EnvelopeResult) -> None:
    """Rows ``tau,t_knot``: one per knot per accepted step."""
    fh, w = _open(path)
    with fh:
        w.writerow(["tau", "t_knot"])
        for rec in result.records:
            tau = _num(rec.tau)
            for k in rec.curve.grid.knots[:-1]:
                w.writerow([tau, _num(k)])


def export_omega(path, result: EnvelopeResult) -> None:
    """Rows ``tau,omega,f_inst`` with ``f_inst = omega / P``."""
    fh, w = _open(path)
    with fh:
        w.writerow(["tau", "omega", "f_inst"])
        for rec in result.records:
            w.writerow([_num(rec.tau), _num(rec.omega), _num(rec.omega / result.period)])
