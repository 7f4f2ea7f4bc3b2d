"""Dependency-free SVG line plots with deterministic bytes."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence, Union
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=40, bottom=55)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")

Series = Union[Mapping[str, tuple], Sequence[tuple]]


def _normalize(series: Series) -> list:
    items = list(series.items()) if isinstance(series, Mapping) else [(s[0], (s[1], s[2])) for s in series]
    out = []
    for label, (xs, ys) in items:
        x = np.asarray(xs, dtype=float).reshape(-1)
        y = np.asarray(ys, dtype=float).reshape(-1)
        if x.size != y.size:
            raise ValueError(f"series {label!r}: x and y lengths differ")
        keep = np.isfinite(x) & np.isfinite(y)
        out.append((str(label), x[keep], y[keep]))
    return out


def _ticks(lo: float, hi: float, count: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    return [float(v) for v in np.arange(start, hi + 0.5 * step * 1e-6, step) if v <= hi + 1e-12 * abs(hi)]


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def emit_plot(series: Series, axes, path) -> Path:
    """Write a standalone SVG line plot.

    ``series`` maps labels to ``(xs, ys)`` or is a list of ``(label, xs, ys)``.
    ``axes`` is ``(xlabel, ylabel)`` or ``(xlabel, ylabel, title)``.  A legend is
    drawn when there is more than one series.
    """
    data = _normalize(series)
    if not data or all(x.size == 0 for _, x, _ in data):
        raise ValueError("emit_plot needs at least one nonempty series")
    xlabel, ylabel, *rest = list(axes) + [""] * max(0, 2 - len(axes))
    title = rest[0] if rest else ""

    xs = np.concatenate([x for _, x, _ in data])
    ys = np.concatenate([y for _, _, y in data])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    L, R, T, B = MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"]
    sx = lambda v: L + (v - x0) / (x1 - x0) * (R - L)
    sy = lambda v: B - (v - y0) / (y1 - y0) * (B - T)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        px = sx(v)
        out.append(f'<line x1="{px:.2f}" y1="{B}" x2="{px:.2f}" y2="{B + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{B + 18}" text-anchor="middle">{_fmt(v)}</text>')
    for v in _ticks(y0, y1):
        py = sy(v)
        out.append(f'<line x1="{L - 5}" y1="{py:.2f}" x2="{L}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{py + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')
    out.append(f'<text x="{(L + R) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(str(xlabel))}</text>')
    out.append(f'<text x="16" y="{(T + B) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(T + B) / 2:.1f})">{escape(str(ylabel))}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="14">{escape(str(title))}</text>')

    for k, (label, x, y) in enumerate(data):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}">'
                   f"<title>{escape(label)}</title></polyline>")
    if len(data) > 1:
        out.append('<g class="legend">')
        for k, (label, _, _) in enumerate(data):
            ly = T + 14 + 16 * k
            color = COLORS[k % len(COLORS)]
            out.append(f'<line x1="{R - 150}" y1="{ly}" x2="{R - 130}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{R - 125}" y="{ly + 4}">{escape(label)}</text>')
        out.append("</g>")
    out.append("</svg>")

    path = Path(path)
    try:
        path.write_text("\n".join(out) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write plot to {path}: {exc}") from exc
    return path
