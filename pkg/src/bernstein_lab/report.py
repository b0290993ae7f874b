"""CSV tables, text summaries and dependency-free SVG line charts."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Check:
    label: str  # inequality tag, e.g. "(B_p)"
    description: str
    value: float
    threshold: str
    passed: bool

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FLAG"


@dataclass(frozen=True, eq=False)
class Series:
    title: str
    x: np.ndarray
    ys: dict  # legend -> values
    xlabel: str = ""
    logx: bool = True
    logy: bool = False


@dataclass(eq=False)
class ExperimentResult:
    experiment: str
    model: str
    columns: list
    rows: list
    checks: list = field(default_factory=list)
    series: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return any(not c.passed for c in self.checks)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.12g" % v
    return str(v)


def csv_text(res: ExperimentResult, meta: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION}\n")
    for k in sorted(meta):
        buf.write(f"# {k}={meta[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(res.columns)
    for row in res.rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def summary_text(res: ExperimentResult, meta: dict) -> str:
    out = [f"experiment: {res.experiment}", f"model: {res.model}"]
    out += [f"{k}: {meta[k]}" for k in sorted(meta) if k not in ("experiment", "model")]
    for k in sorted(res.notes):
        out.append(f"{k}: {fmt(res.notes[k])}")
    out.append("")
    for c in res.checks:
        out.append(f"{c.status} {c.label} {c.description}: measured {fmt(c.value)} "
                   f"(threshold {c.threshold})")
    flags = sum(not c.passed for c in res.checks)
    out.append("")
    out.append(f"{len(res.checks) - flags} passed, {flags} flagged")
    return "\n".join(out) + "\n"


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_chart(s: Series, width: int = 640, height: int = 400) -> str:
    """Polyline chart of ``s``; nonpositive values are dropped on log axes."""
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom

    def tx(v, log):
        return np.log10(v) if log else v

    xs = np.asarray(s.x, dtype=float)
    pts = {}
    for name, ys in s.ys.items():
        ys = np.asarray(ys, dtype=float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        if s.logx:
            ok &= xs > 0
        if s.logy:
            ok &= ys > 0
        pts[name] = (tx(xs[ok], s.logx), tx(ys[ok], s.logy))
    allx = np.concatenate([p[0] for p in pts.values()] or [np.zeros(1)])
    ally = np.concatenate([p[1] for p in pts.values()] or [np.zeros(1)])
    if allx.size == 0:
        allx = np.zeros(1)
    if ally.size == 0:
        ally = np.zeros(1)
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14" '
           f'font-family="sans-serif">{escape(s.title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for v, anchor in ((x0, "start"), (x1, "end")):
        label = ("1e%.3g" % v) if s.logx else "%.4g" % v
        out.append(f'<text x="{px(v):.1f}" y="{top + ph + 16}" text-anchor="{anchor}" '
                   f'font-size="11" font-family="sans-serif">{escape(label)}</text>')
    for v in (y0, y1):
        label = ("1e%.3g" % v) if s.logy else "%.4g" % v
        out.append(f'<text x="{left - 6}" y="{py(v) + 4:.1f}" text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{escape(label)}</text>')
    if s.xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
                   f'font-size="12" font-family="sans-serif">{escape(s.xlabel)}</text>')
    for i, (name, (px_, py_)) in enumerate(pts.items()):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(px_, py_))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{left + 8}" y="{top + 16 + 14 * i}" font-size="11" fill="{color}" '
                   f'font-family="sans-serif">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
