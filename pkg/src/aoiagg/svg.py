"""Minimal standalone SVG charts with byte-deterministic output."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence, Tuple
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = (70, 30, 40, 60)     # left, right, top, bottom
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _num(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi == lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _range(values: Sequence[float]) -> Tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _frame(title: str, xlabel: str, ylabel: str) -> List[str]:
    left, right, top, bottom = MARGIN
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="{top - 15}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{HEIGHT - bottom}" x2="{WIDTH - right}" y2="{HEIGHT - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{HEIGHT - bottom}" stroke="black"/>',
        f'<text x="{(left + WIDTH - right) / 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{(top + HEIGHT - bottom) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 15 {(top + HEIGHT - bottom) / 2})">{escape(ylabel)}</text>',
    ]


def _write(parts: List[str], path) -> Path:
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n")
    return path


def line_chart(series: Dict[str, List[Tuple[float, float]]], path, title: str, xlabel: str,
               ylabel: str) -> Path:
    points = [p for pts in series.values() for p in pts]
    if not points:
        raise ValueError("line chart needs at least one point")
    left, right, top, bottom = MARGIN
    x0, x1 = _range([p[0] for p in points])
    y0, y1 = _range([p[1] for p in points])

    def sx(x):
        return left + (x - x0) / (x1 - x0) * (WIDTH - left - right)

    def sy(y):
        return HEIGHT - bottom - (y - y0) / (y1 - y0) * (HEIGHT - top - bottom)

    parts = _frame(title, xlabel, ylabel)
    for y in _ticks(y0, y1):
        parts.append(f'<text x="{left - 6}" y="{_num(sy(y) + 4)}" text-anchor="end">{y:.1f}</text>')
    for x in sorted({p[0] for p in points}):
        parts.append(f'<text x="{_num(sx(x))}" y="{HEIGHT - bottom + 16}" text-anchor="middle">{x:g}</text>')
    for i, name in enumerate(sorted(series)):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted(series[name])
        coords = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{_num(sx(x))}" cy="{_num(sy(y))}" r="3" fill="{color}"/>')
        parts.append(f'<text x="{WIDTH - right - 5}" y="{top + 15 * (i + 1)}" text-anchor="end" '
                     f'fill="{color}">{escape(name)}</text>')
    return _write(parts, path)


def bar_chart(bars: Dict[str, Sequence[float]], components: Sequence[str], path, title: str,
              ylabel: str) -> Path:
    """Stacked bars, one per label, split into ``components``."""
    if not bars:
        raise ValueError("bar chart needs at least one bar")
    left, right, top, bottom = MARGIN
    peak = max(sum(v) for v in bars.values()) or 1.0
    span = WIDTH - left - right
    slot = span / len(bars)
    width = slot * 0.6
    parts = _frame(title, "", ylabel)
    for y in _ticks(0.0, peak):
        py = HEIGHT - bottom - y / peak * (HEIGHT - top - bottom)
        parts.append(f'<text x="{left - 6}" y="{_num(py + 4)}" text-anchor="end">{y:.1f}</text>')
    for i, label in enumerate(sorted(bars)):
        x = left + slot * i + (slot - width) / 2
        base = HEIGHT - bottom
        for j, value in enumerate(bars[label]):
            h = value / peak * (HEIGHT - top - bottom)
            base -= h
            parts.append(f'<rect x="{_num(x)}" y="{_num(base)}" width="{_num(width)}" height="{_num(h)}" '
                         f'fill="{PALETTE[j % len(PALETTE)]}"/>')
        parts.append(f'<text x="{_num(x + width / 2)}" y="{HEIGHT - bottom + 16}" '
                     f'text-anchor="middle">{escape(label)}</text>')
    for j, name in enumerate(components):
        parts.append(f'<text x="{WIDTH - right - 5}" y="{top + 15 * (j + 1)}" text-anchor="end" '
                     f'fill="{PALETTE[j % len(PALETTE)]}">{escape(name)}</text>')
    return _write(parts, path)
