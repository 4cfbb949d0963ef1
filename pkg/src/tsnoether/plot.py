"""Standalone SVG line charts (no plotting library, no external assets)."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptySeries
from .timescale import fmt

WIDTH, HEIGHT = 800, 500
LEFT, RIGHT, TOP, BOTTOM = 90, 30, 30, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _range(lo: float, hi: float) -> tuple[float, float]:
    """Axis range with 5% margins; a degenerate range is centred on its value."""
    if hi == lo:
        pad = 0.5 * max(abs(lo), 1.0)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    digits = max(0, -math.floor(math.log10(step)) + 2)
    first = math.ceil(lo / step)
    ticks = []
    k = first
    while k * step <= hi + 1e-12 * abs(step):
        ticks.append(round(k * step, digits) + 0.0)
        k += 1
    return ticks


def render_svg(series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
               title: str = "", xlabel: str = "t", ylabel: str = "") -> str:
    """One polyline per ``name -> (t, values)`` entry, with a legend and tick labels."""
    if not series:
        raise EmptySeries("need at least one series")
    data = {}
    for name, (t, y) in series.items():
        t, y = np.asarray(t, float), np.asarray(y, float)
        if t.size == 0 or t.shape != y.shape:
            raise EmptySeries(f"series {name!r} is empty or has mismatched lengths")
        data[name] = (t, y)
    x0, x1 = _range(min(t.min() for t, _ in data.values()), max(t.max() for t, _ in data.values()))
    y0, y1 = _range(min(y.min() for _, y in data.values()), max(y.max() for _, y in data.values()))
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(t):
        return LEFT + (t - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for tick in nice_ticks(x0, x1):
        X = px(tick)
        out.append(f'<line x1="{X:.2f}" y1="{TOP + ph}" x2="{X:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{fmt(tick)}</text>')
    for tick in nice_ticks(y0, y1):
        Y = py(tick)
        out.append(f'<line x1="{LEFT - 5}" y1="{Y:.2f}" x2="{LEFT}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{Y + 4:.2f}" text-anchor="end">{fmt(tick)}</text>')
    if xlabel:
        out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="15" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 15 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.1f}" y="20" text-anchor="middle">{escape(title)}</text>')
    for k, (name, (t, y)) in enumerate(data.items()):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(t, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}">'
                   f'<title>{escape(name)}</title></polyline>')
        ly = TOP + 15 + 18 * k
        out.append(f'<line x1="{LEFT + pw - 150}" y1="{ly}" x2="{LEFT + pw - 120}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw - 115}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], path, **kw) -> Path:
    path = Path(path)
    path.write_text(render_svg(series, **kw), encoding="utf-8", newline="\n")
    return path
