"""Self-contained SVG line charts for result tables; no plotting dependencies.

One <polyline> per series, a vertical whisker per point for the error
column, labeled axes, and a legend. Rows with a non-finite x or y (for
example the -inf attack-off sentinel) are skipped.
"""

from __future__ import annotations

import math

from .errors import FormatError

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2")

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 62, 150, 24, 52


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def render_line_chart(rows, x: str, y: str, series: str, err: str = "ci95",
                      title: str = "") -> str:
    """Render grouped rows (dicts) to an SVG document string."""
    groups: dict = {}
    for row in rows:
        try:
            xv = float(row[x])
            yv = float(row[y])
            ev = float(row.get(err, 0.0) or 0.0)
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"rows lack numeric columns {x!r}/{y!r}") from None
        if not (math.isfinite(xv) and math.isfinite(yv)):
            continue
        groups.setdefault(str(row.get(series, "")), []).append((xv, yv, ev))
    groups = {k: sorted(v) for k, v in groups.items() if v}
    if not groups:
        raise FormatError("no plottable rows")

    xs = [p[0] for pts in groups.values() for p in pts]
    ys_lo = [p[1] - p[2] for pts in groups.values() for p in pts]
    ys_hi = [p[1] + p[2] for pts in groups.values() for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys_lo), max(ys_hi)
    if x1 <= x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.04 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return _ML + (v - x0) / (x1 - x0) * (_W - _ML - _MR)

    def sy(v):
        return _H - _MB - (v - y0) / (y1 - y0) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{_ML}" y="15" font-size="13">{_escape(title)}</text>')
    # axes and ticks
    ax_y = _H - _MB
    parts.append(f'<line x1="{_ML}" y1="{ax_y}" x2="{_W - _MR}" y2="{ax_y}" stroke="black"/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{ax_y}" stroke="black"/>')
    for tv in _ticks(x0, x1):
        px = sx(tv)
        parts.append(f'<line x1="{px:.2f}" y1="{ax_y}" x2="{px:.2f}" y2="{ax_y + 5}" stroke="black"/>')
        parts.append(f'<text x="{px:.2f}" y="{ax_y + 18}" text-anchor="middle">{_fmt(tv)}</text>')
    for tv in _ticks(y0, y1):
        py = sy(tv)
        parts.append(f'<line x1="{_ML - 5}" y1="{py:.2f}" x2="{_ML}" y2="{py:.2f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{py + 4:.2f}" text-anchor="end">{_fmt(tv)}</text>')
    parts.append(f'<text x="{(_ML + _W - _MR) / 2:.2f}" y="{_H - 14}" '
                 f'text-anchor="middle">{_escape(x)}</text>')
    parts.append(f'<text x="16" y="{(_MT + ax_y) / 2:.2f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(_MT + ax_y) / 2:.2f})">{_escape(y)}</text>')
    # series
    legend_y = _MT + 10
    for idx, (name, pts) in enumerate(groups.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        for xv, yv, ev in pts:
            if ev > 0:
                parts.append(f'<line x1="{sx(xv):.2f}" y1="{sy(yv - ev):.2f}" '
                             f'x2="{sx(xv):.2f}" y2="{sy(yv + ev):.2f}" '
                             f'stroke="{color}" stroke-width="1"/>')
        coords = " ".join(f"{sx(xv):.2f},{sy(yv):.2f}" for xv, yv, _ in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{coords}"/>')
        for xv, yv, _ in pts:
            parts.append(f'<circle cx="{sx(xv):.2f}" cy="{sy(yv):.2f}" r="2.4" fill="{color}"/>')
        lx = _W - _MR + 12
        parts.append(f'<rect x="{lx}" y="{legend_y - 8}" width="14" height="3" fill="{color}"/>')
        parts.append(f'<text x="{lx + 20}" y="{legend_y - 3}">{_escape(name)}</text>')
        legend_y += 16
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))
