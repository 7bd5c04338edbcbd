"""SVG scatter plots of 2-D embeddings."""

from __future__ import annotations

from collections.abc import Sequence
from xml.sax.saxutils import escape

from .errors import UsageError
from .latent_analysis import EmbeddingPoint


WIDTH = 480
HEIGHT = 400
MARGIN = 40
RADIUS = 3.0

LABEL_COLORS = {0: "#1f77b4", 1: "#d62728"}
LABEL_NAMES = {0: "random", 1: "geometric"}


def _scale(value: float, low: float, high: float, start: float, end: float) -> float:
    if high == low:
        return (start + end) / 2.0
    return start + (value - low) / (high - low) * (end - start)


def render_scatter_svg(points: Sequence[EmbeddingPoint], title: str = "") -> str:
    """Scatter of labelled 2-D points with an axis box and a two-entry legend.

    Args:
        points: Embedding rows; labels must be 0 or 1
        title: Optional caption drawn above the axis box

    Returns:
        A standalone SVG document with one circle per point
    """
    if not points:
        raise UsageError("nothing to plot: the embedding has no points")
    unknown = {p.label for p in points} - LABEL_COLORS.keys()
    if unknown:
        raise UsageError(f"labels {sorted(unknown)} have no colour; expected 0 or 1")

    xs = [p.x for p in points]
    ys = [p.y for p in points]
    left, right = MARGIN, WIDTH - MARGIN
    top, bottom = MARGIN, HEIGHT - MARGIN

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
        'fill="none" stroke="black" stroke-width="1"/>',
    ]
    if title:
        lines.append(f'<text x="{WIDTH / 2:.1f}" y="{MARGIN / 2:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="14">{escape(title)}</text>')

    for p in points:
        cx = _scale(p.x, min(xs), max(xs), left + RADIUS, right - RADIUS)
        # SVG y grows downwards
        cy = _scale(p.y, min(ys), max(ys), bottom - RADIUS, top + RADIUS)
        lines.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{RADIUS}" fill="{LABEL_COLORS[p.label]}" '
                     'fill-opacity="0.8"/>')

    for row, (label, color) in enumerate(LABEL_COLORS.items()):
        y = top + 12 + 16 * row
        lines.append(f'<rect x="{right - 90}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
        lines.append(f'<text x="{right - 74}" y="{y + 1}" font-family="sans-serif" '
                     f'font-size="11">{LABEL_NAMES[label]}</text>')

    lines.append("</svg>")
    return "\n".join(lines) + "\n"
