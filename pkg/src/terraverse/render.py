"""Read-only views of compiled terrains: ASCII, 8-bit PGM with goal markers, SVG, plus a line chart."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .compiler import CompiledTerrain

ASCII_RAMP = " .:-=+*#%@"  # 10 levels, low to high
GOAL_MARK = "12345678"


def _levels(t: CompiledTerrain, n: int) -> np.ndarray:
    """Heights quantized into ``n`` bins over the terrain's own range; image layout ``[y, x]``."""
    h = t.heights.T
    lo, hi = float(h.min()), float(h.max())
    if hi <= lo:
        return np.zeros(h.shape, dtype=np.int64)
    return np.minimum((h - lo) / (hi - lo) * n, n - 1).astype(np.int64)


def _goal_pixels(t: CompiledTerrain) -> list[tuple[int, int]]:
    return [(j, i) for i, j in t.goal_cells()]  # (row, col) in image space


def render_ascii(t: CompiledTerrain, goals: bool = True) -> str:
    """One character per cell, one line per y-row; goals drawn as their 1-based index."""
    lv = _levels(t, len(ASCII_RAMP))
    grid = [[ASCII_RAMP[v] for v in row] for row in lv]
    if goals:
        for k, (r, c) in enumerate(_goal_pixels(t)):
            grid[r][c] = GOAL_MARK[k % len(GOAL_MARK)]
    return "\n".join("".join(row) for row in grid) + "\n"


def render_pgm(t: CompiledTerrain, goals: bool = True) -> bytes:
    """Binary 8-bit PGM. Heights span 16..239; goal cells get a 3x3 outline,
    white for the first goal and black for the rest."""
    h = t.heights.T
    lo, hi = float(h.min()), float(h.max())
    if hi > lo:
        img = np.rint(16 + (h - lo) / (hi - lo) * 223).astype(np.uint8)
    else:
        img = np.full(h.shape, 128, dtype=np.uint8)
    if goals:
        rows, cols = img.shape
        for k, (r, c) in enumerate(_goal_pixels(t)):
            val = 255 if k == 0 else 0
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if (dr or dc) and 0 <= r + dr < rows and 0 <= c + dc < cols:
                        img[r + dr, c + dc] = val
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    return header + img.tobytes()


def _color(v: float) -> str:
    """Blue (low) through green to brown (high)."""
    stops = np.array([[40, 60, 160], [70, 170, 90], [230, 220, 120], [140, 90, 50]], dtype=float)
    x = min(max(v, 0.0), 1.0) * (len(stops) - 1)
    k = min(int(x), len(stops) - 2)
    rgb = stops[k] + (stops[k + 1] - stops[k]) * (x - k)
    return "#%02x%02x%02x" % tuple(int(round(c)) for c in rgb)


def render_svg(t: CompiledTerrain, px: int = 5, goals: bool = True) -> str:
    """Top-down view, one rect per cell; goals as red dots, the first one ringed."""
    h = t.heights.T
    lo, hi = float(h.min()), float(h.max())
    norm = (h - lo) / (hi - lo) if hi > lo else np.zeros(h.shape)
    rows, cols = h.shape
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{cols * px}" height="{rows * px}" '
           f'viewBox="0 0 {cols * px} {rows * px}">',
           f"<title>{escape(t.source_name)} d={t.difficulty:g}</title>"]
    for r in range(rows):
        for c in range(cols):
            out.append(f'<rect x="{c * px}" y="{r * px}" width="{px}" height="{px}" fill="{_color(norm[r, c])}"/>')
    if goals:
        for k, (r, c) in enumerate(_goal_pixels(t)):
            cx, cy = (c + 0.5) * px, (r + 0.5) * px
            out.append(f'<circle class="goal" cx="{cx}" cy="{cy}" r="{px * 0.9}" fill="red"/>')
            if k == 0:
                out.append(f'<circle cx="{cx}" cy="{cy}" r="{px * 1.6}" fill="none" stroke="white" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def svg_line_chart(xs: Sequence[float], ys: Sequence[float], title: str = "", y_label: str = "",
                   width: int = 480, height: int = 300) -> str:
    """Minimal polyline chart with min/max tick labels."""
    pad = 40
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(ys)), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<text x="{width / 2}" y="20" text-anchor="middle">{escape(title)}</text>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{pad - 4}" y="{sy(y1):.1f}" text-anchor="end">{y1:g}</text>',
           f'<text x="{pad - 4}" y="{sy(y0):.1f}" text-anchor="end">{y0:g}</text>',
           f'<text x="{sx(x0):.1f}" y="{height - pad + 16}" text-anchor="middle">{x0:g}</text>',
           f'<text x="{sx(x1):.1f}" y="{height - pad + 16}" text-anchor="middle">{x1:g}</text>',
           f'<text x="12" y="{height / 2}" transform="rotate(-90 12 {height / 2})" '
           f'text-anchor="middle">{escape(y_label)}</text>',
           f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{pts}"/>']
    out += [f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="steelblue"/>' for x, y in zip(xs, ys)]
    out.append("</svg>")
    return "\n".join(out) + "\n"
