"""Deterministic SVG line charts.

Hand-rolled rather than delegated to a plotting library so identical
input produces identical bytes; reports rely on that for artifact
reproducibility. Supports multiple series, an optional interquartile
band, and log-scaled y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import EmptySeries

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 58, 16, 18, 40
PALETTE = ("#1f5fae", "#c23b22", "#2e8b57", "#8a4fb8", "#b8860b", "#444444")


@dataclass
class Series:
    label: str
    xs: list
    ys: list
    band: Optional[tuple] = None   # (lo list, hi list) around ys


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min(s for s in (mag, 2 * mag, 5 * mag, 10 * mag) if s >= raw)
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * step:
        out.append(t)
        t += step
    return out or [lo]


def _log_ticks(lo: float, hi: float):
    out = []
    e = math.floor(math.log10(lo))
    while 10 ** e <= hi * (1 + 1e-12):
        if 10 ** e >= lo * (1 - 1e-12):
            out.append(10 ** e)
        e += 1
    return out or [lo]


def render_plot(series, path: str, title: str = "", logy: bool = False,
                xlabel: str = "", ylabel: str = "") -> str:
    """Write an SVG line chart; returns the path.

    Raises EmptySeries when no series or only empty series are given.
    Output is a pure function of the inputs.
    """
    series = [s for s in series if len(s.xs) > 0]
    if not series:
        raise EmptySeries("nothing to plot")
    for s in series:
        if len(s.xs) != len(s.ys):
            raise EmptySeries(f"series {s.label!r} has mismatched lengths")

    all_x = [x for s in series for x in s.xs]
    all_y = [y for s in series for y in s.ys]
    for s in series:
        if s.band is not None:
            all_y += list(s.band[0]) + list(s.band[1])
    if logy:
        all_y = [y for y in all_y if y > 0]
        if not all_y:
            raise EmptySeries("log-scale plot needs positive values")
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + (abs(y_lo) if y_lo else 1.0)

    def sx(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R)

    def sy(y):
        if logy:
            fy = (math.log10(y) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo))
        else:
            fy = (y - y_lo) / (y_hi - y_lo)
        return HEIGHT - MARGIN_B - fy * (HEIGHT - MARGIN_T - MARGIN_B)

    parts = []
    parts.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
                 f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
    parts.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    if title:
        parts.append(f'<text x="{WIDTH // 2}" y="14" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="13">{title}</text>')

    # axes
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    parts.append(f'<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" '
                 f'stroke="black" stroke-width="1"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{WIDTH - MARGIN_R}" y2="{y0}" '
                 f'stroke="black" stroke-width="1"/>')
    for t in _ticks(x_lo, x_hi):
        px = sx(t)
        parts.append(f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 4}" '
                     f'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(px)}" y="{y0 + 16}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="10">{_fmt(t)}</text>')
    yticks = _log_ticks(y_lo, y_hi) if logy else _ticks(y_lo, y_hi)
    for t in yticks:
        py = sy(t)
        parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" '
                     f'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{x0 - 7}" y="{_fmt(py + 3)}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="10">{_fmt(t)}</text>')
    if xlabel:
        parts.append(f'<text x="{(MARGIN_L + WIDTH - MARGIN_R) // 2}" '
                     f'y="{HEIGHT - 8}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{xlabel}</text>')
    if ylabel:
        cy = (MARGIN_T + HEIGHT - MARGIN_B) // 2
        parts.append(f'<text x="14" y="{cy}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11" '
                     f'transform="rotate(-90 14 {cy})">{ylabel}</text>')

    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        if s.band is not None:
            lo, hi = s.band
            pts = [f"{_fmt(sx(x))},{_fmt(sy(v))}" for x, v in zip(s.xs, hi)]
            pts += [f"{_fmt(sx(x))},{_fmt(sy(v))}"
                    for x, v in zip(reversed(s.xs), reversed(lo))]
            parts.append(f'<polygon points="{" ".join(pts)}" fill="{color}" '
                         f'fill-opacity="0.15" stroke="none"/>')
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(s.xs, s.ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')

    # legend
    lx, ly = MARGIN_L + 10, MARGIN_T + 8
    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        parts.append(f'<line x1="{lx}" y1="{ly + 14 * k}" x2="{lx + 18}" '
                     f'y2="{ly + 14 * k}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 24}" y="{ly + 14 * k + 4}" '
                     f'font-family="sans-serif" font-size="11">{s.label}</text>')

    parts.append("</svg>")
    data = "\n".join(parts) + "\n"
    with open(path, "w") as fh:
        fh.write(data)
    return path
