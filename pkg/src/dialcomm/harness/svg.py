"""Minimal SVG charts: polyline plots and bar panels, no plotting dependency."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=150, top=40, bottom=55)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, n)


def _range(values) -> tuple:
    arr = np.concatenate([np.asarray(v, dtype=float).ravel() for v in values])
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return 0.0, 1.0
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        pad = 1.0 if lo == 0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_chart(series: dict, title: str, xlabel: str, ylabel: str, bands: dict | None = None) -> str:
    """``series``: label -> (xs, ys). ``bands``: label -> (lower, upper) shaded around it."""
    bands = bands or {}
    xs_all = [np.asarray(x, dtype=float) for x, _ in series.values()]
    ys_all = [np.asarray(y, dtype=float) for _, y in series.values()]
    ys_all += [np.asarray(b, dtype=float) for pair in bands.values() for b in pair]
    x0, x1 = _range(xs_all)
    y0, y1 = _range(ys_all)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2 - MARGIN["right"] / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.1f}" y1="{MARGIN["top"] + ph}" x2="{px(t):.1f}" '
                   f'y2="{MARGIN["top"] + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(t):.1f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{t:.0f}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{py(t):.1f}" x2="{MARGIN["left"]}" y2="{py(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        if label in bands:
            lo, hi = (np.asarray(b, dtype=float) for b in bands[label])
            pts = [f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, hi)]
            pts += [f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs[::-1], lo[::-1])]
            out.append(f'<polygon points="{" ".join(pts)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN["top"] + 14 + 18 * i
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_panels(panels: list, title: str, xlabel: str = "output", ylabel: str = "frequency") -> str:
    """``panels``: list of (caption, bin_edges, frequencies), laid out in one row."""
    n = max(1, len(panels))
    pw, ph, gap = 120, 160, 20
    width = 40 + n * (pw + gap)
    height = ph + 90
    top = 40
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    for i, (caption, edges, freqs) in enumerate(panels):
        left = 30 + i * (pw + gap)
        edges = np.asarray(edges, dtype=float)
        freqs = np.asarray(freqs, dtype=float)
        out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        span = edges[-1] - edges[0]
        for lo, hi, f in zip(edges[:-1], edges[1:], freqs):
            x = left + (lo - edges[0]) / span * pw
            w = (hi - lo) / span * pw
            h = min(1.0, f) * ph
            out.append(f'<rect x="{x:.2f}" y="{top + ph - h:.2f}" width="{w:.2f}" height="{h:.2f}" '
                       f'fill="{PALETTE[0]}"/>')
        out.append(f'<text x="{left + pw / 2}" y="{top + ph + 15}" text-anchor="middle">'
                   f'{edges[0]:g} … {edges[-1]:g}</text>')
        out.append(f'<text x="{left + pw / 2}" y="{top + ph + 32}" text-anchor="middle">{escape(caption)}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle">'
               f'{escape(xlabel)} (bar height = {escape(ylabel)}, full panel = 1)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
