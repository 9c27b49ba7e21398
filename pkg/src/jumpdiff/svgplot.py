"""Minimal static SVG line plots (polylines and axes, no dependencies)."""

from __future__ import annotations

import math

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 16, 28, 44


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def line_plot(path: str, xs, series: list[tuple[str, list[float]]], title: str = "",
              xlabel: str = "", ylabel: str = "", logy: bool = False) -> None:
    """Write a line plot of the named series against xs to an SVG file.

    With ``logy`` the values are plotted as log10 (nonpositive points are
    dropped from the polyline).
    """
    xs = [float(v) for v in xs]
    prepared = []
    for name, ys in series:
        pts = []
        for x, y in zip(xs, ys):
            y = float(y)
            if logy:
                if y <= 0.0 or not math.isfinite(y):
                    continue
                y = math.log10(y)
            elif not math.isfinite(y):
                continue
            pts.append((x, y))
        prepared.append((name, pts))
    all_pts = [p for _, pts in prepared for p in pts]
    if not all_pts:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(p[0] for p in all_pts), max(p[0] for p in all_pts)
    y_lo, y_hi = min(p[1] for p in all_pts), max(p[1] for p in all_pts)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def py(y: float) -> float:
        return _H - _MB - (y - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="16" text-anchor="middle" font-size="13">{title}</text>',
    ]
    axis = f'stroke="#333" stroke-width="1"'
    out.append(f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" {axis}/>')
    out.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" {axis}/>')
    for v in _ticks(x_lo, x_hi):
        out.append(f'<line x1="{px(v):.1f}" y1="{_H - _MB}" x2="{px(v):.1f}" '
                   f'y2="{_H - _MB + 4}" {axis}/>')
        out.append(f'<text x="{px(v):.1f}" y="{_H - _MB + 16}" text-anchor="middle">'
                   f'{v:g}</text>')
    for v in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{_ML - 4}" y1="{py(v):.1f}" x2="{_ML}" y2="{py(v):.1f}" {axis}/>')
        out.append(f'<text x="{_ML - 7}" y="{py(v):.1f}" text-anchor="end" '
                   f'dominant-baseline="middle">{v:g}</text>')
    out.append(f'<text x="{(_ML + _W - _MR) / 2:.0f}" y="{_H - 8}" '
               f'text-anchor="middle">{xlabel}</text>')
    label_y = ("log10 " + ylabel) if logy else ylabel
    out.append(f'<text x="14" y="{(_MT + _H - _MB) / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(_MT + _H - _MB) / 2:.0f})">{label_y}</text>')
    for k, (name, pts) in enumerate(prepared):
        color = _PALETTE[k % len(_PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        out.append(f'<text x="{_W - _MR - 8}" y="{_MT + 14 + 14 * k}" text-anchor="end" '
                   f'fill="{color}">{name}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
