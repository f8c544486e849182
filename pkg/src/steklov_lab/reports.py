"""
Deterministic file outputs: JSON, JSONL, CSV and self-contained SVG plots.

Byte-identical re-runs are part of the contract, so every writer sorts keys,
formats floats with ``repr`` (shortest round-trip form) and uses ``\\n`` line
endings.  Nothing here records wall-clock time or host information.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np
import scipy.sparse as sp


def to_plain(obj):
    """Convert numpy scalars/arrays, tuples and dataclass records to JSON types."""
    if isinstance(obj, Mapping):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        # NaN / inf are not JSON; keep them readable
        return x if math.isfinite(x) else str(x)
    if hasattr(obj, "to_record"):
        return to_plain(obj.to_record())
    return obj


def dumps(obj) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8", newline="\n")
    return path


def write_jsonl(path: str | Path, records: Iterable) -> Path:
    path = Path(path)
    lines = [json.dumps(to_plain(r), sort_keys=True, allow_nan=False) for r in records]
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8", newline="\n")
    return path


def _cell(v) -> str:
    v = to_plain(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def csv_text(rows: Sequence[Mapping], columns: Sequence[str] | None = None) -> str:
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def write_csv(path: str | Path, rows: Sequence[Mapping],
              columns: Sequence[str] | None = None) -> Path:
    path = Path(path)
    path.write_text(csv_text(rows, columns), encoding="utf-8", newline="\n")
    return path


def triplet_text(matrix) -> str:
    """Sparse matrix as text: a ``# rows cols nnz`` header, then ``i j value``
    per stored entry (0-based, row-major order, values in ``repr`` form)."""
    A = sp.coo_matrix(matrix)
    order = np.lexsort((A.col, A.row))
    lines = [f"# {A.shape[0]} {A.shape[1]} {A.nnz}"]
    lines += [f"{int(A.row[k])} {int(A.col[k])} {float(A.data[k])!r}" for k in order]
    return "\n".join(lines) + "\n"


def read_triplets(path: str | Path):
    text = Path(path).read_text().splitlines()
    n, m, _ = (int(v) for v in text[0].lstrip("#").split())
    rows, cols, vals = [], [], []
    for line in text[1:]:
        i, j, v = line.split()
        rows.append(int(i))
        cols.append(int(j))
        vals.append(float(v))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, m))


# --------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def svg_plot(series: Sequence[Mapping], title: str = "", xlabel: str = "",
             ylabel: str = "", markers: Sequence[Mapping] = (),
             width: int = 640, height: int = 420) -> str:
    """Line plot.

    Parameters
    ----------
    series
        Each entry has ``x``, ``y`` and optionally ``label`` and ``style``
        (``"line"`` default, or ``"points"``).
    markers
        Point sets drawn on top: ``x``, ``y``, ``label`` and ``shape``
        (``"circle"`` or ``"square"``).
    """
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs = [float(v) for s in list(series) + list(markers) for v in s["x"]]
    ys = [float(v) for s in list(series) + list(markers) for v in s["y"]]
    xs = [v for v in xs if math.isfinite(v)] or [0.0, 1.0]
    ys = [v for v in ys if math.isfinite(v)] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def X(v):
        return ml + (float(v) - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + (y1 - float(v)) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_fmt(X(t))}" y1="{mt + ph}" x2="{_fmt(X(t))}" '
                   f'y2="{mt + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(X(t))}" y="{mt + ph + 16}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ml - 4}" y1="{_fmt(Y(t))}" x2="{ml}" y2="{_fmt(Y(t))}" stroke="black"/>')
        out.append(f'<text x="{ml - 6}" y="{_fmt(Y(t) + 4)}" text-anchor="end">{t:.4g}</text>')
    if title:
        out.append(f'<text x="{ml + pw / 2:.2f}" y="{mt - 14}" text-anchor="middle" '
                   f'font-size="13">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{ml + pw / 2:.2f}" y="{height - 10}" text-anchor="middle">'
                   f'{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{mt + ph / 2:.2f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {mt + ph / 2:.2f})">{escape(ylabel)}</text>')

    legend = []
    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = [(X(a), Y(b)) for a, b in zip(s["x"], s["y"])
               if math.isfinite(float(a)) and math.isfinite(float(b))]
        if s.get("style", "line") == "points":
            out += [f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="2.5" fill="{color}"/>' for a, b in pts]
        elif pts:
            d = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)
            out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        legend.append((s.get("label", f"series {i}"), color))
    for j, m in enumerate(markers):
        color = _PALETTE[(len(series) + j) % len(_PALETTE)]
        for a, b in zip(m["x"], m["y"]):
            if m.get("shape", "circle") == "square":
                out.append(f'<rect x="{_fmt(X(a) - 3.5)}" y="{_fmt(Y(b) - 3.5)}" width="7" '
                           f'height="7" fill="none" stroke="{color}" stroke-width="1.5"/>')
            else:
                out.append(f'<circle cx="{_fmt(X(a))}" cy="{_fmt(Y(b))}" r="4" fill="none" '
                           f'stroke="{color}" stroke-width="1.5"/>')
        legend.append((m.get("label", f"markers {j}"), color))
    for k, (label, color) in enumerate(legend):
        y = mt + 10 + 16 * k
        out.append(f'<line x1="{ml + pw + 10}" y1="{y}" x2="{ml + pw + 28}" y2="{y}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 32}" y="{y + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path: str | Path, svg: str) -> Path:
    path = Path(path)
    path.write_text(svg, encoding="utf-8", newline="\n")
    return path
