"""Minimal static SVG charts, written as plain elements."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 480
MARGIN = 60
PALETTE = {"FRI": "#1f77b4", "FRII": "#d62728", "unlabeled": "#7f7f7f"}


def _header(title=""):
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
    )
    if title:
        head += f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>\n'
    return head


def _decades(lo, hi):
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    if a == b:
        b += 1
    return a, b


def loglog_scatter(points, categories=("FRI", "FRII", "unlabeled"), x_label="x", y_label="y", title="") -> str:
    """Scatter on log-log axes; ``points`` are ``(x, y, category, label)`` tuples with x, y > 0.

    Each point becomes one ``<circle class="mark ...">``; the legend uses rects.
    """
    body = _header(title)
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    if points:
        xa, xb = _decades(min(p[0] for p in points), max(p[0] for p in points))
        ya, yb = _decades(min(p[1] for p in points), max(p[1] for p in points))
    else:
        xa, xb, ya, yb = 0, 1, 0, 1

    def px(x):
        return MARGIN + (math.log10(x) - xa) / (xb - xa) * pw

    def py(y):
        return HEIGHT - MARGIN - (math.log10(y) - ya) / (yb - ya) * ph

    body += f'<g class="axes" stroke="black" fill="none">\n'
    body += f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}"/>\n'
    body += f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}"/>\n'
    body += "</g>\n"
    for e in range(xa, xb + 1):
        x = MARGIN + (e - xa) / (xb - xa) * pw
        body += f'<text x="{x:.1f}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" font-size="11">1e{e}</text>\n'
    for e in range(ya, yb + 1):
        y = HEIGHT - MARGIN - (e - ya) / (yb - ya) * ph
        body += f'<text x="{MARGIN - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="11">1e{e}</text>\n'
    body += f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle" font-size="12">{escape(x_label)} (log)</text>\n'
    body += (
        f'<text x="15" y="{HEIGHT / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {HEIGHT / 2:.1f})">{escape(y_label)} (log)</text>\n'
    )
    for x, y, cat, label in points:
        color = PALETTE.get(cat, "#000000")
        body += (
            f'<circle class="mark {escape(cat)}" cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}">'
            f"<title>{escape(str(label))}</title></circle>\n"
        )
    for i, cat in enumerate(categories):
        y = MARGIN + 14 * i
        body += f'<rect class="legend" x="{WIDTH - MARGIN - 80}" y="{y - 8}" width="8" height="8" fill="{PALETTE.get(cat, "#000000")}"/>\n'
        body += f'<text x="{WIDTH - MARGIN - 68}" y="{y}" font-size="11">{escape(cat)}</text>\n'
    return body + "</svg>\n"


def bar_chart(bars, title="") -> str:
    """Vertical bars from ``(label, value)``; ``None`` values are drawn as an N/A label."""
    body = _header(title)
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    values = [v for _, v in bars if v is not None]
    top = max(values) if values else 1.0
    top = top if top > 0 else 1.0
    slot = pw / max(len(bars), 1)
    body += f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>\n'
    for i, (label, v) in enumerate(bars):
        x = MARGIN + i * slot + 0.15 * slot
        if v is None:
            body += f'<text x="{x + 0.35 * slot:.1f}" y="{HEIGHT - MARGIN - 6}" text-anchor="middle" font-size="11">N/A</text>\n'
        else:
            h = max(v, 0.0) / top * ph
            body += f'<rect class="bar" x="{x:.1f}" y="{HEIGHT - MARGIN - h:.1f}" width="{0.7 * slot:.1f}" height="{h:.1f}" fill="#4c72b0"/>\n'
            body += f'<text x="{x + 0.35 * slot:.1f}" y="{HEIGHT - MARGIN - h - 4:.1f}" text-anchor="middle" font-size="10">{v:.3g}</text>\n'
        body += f'<text x="{x + 0.35 * slot:.1f}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle" font-size="11">{escape(label)}</text>\n'
    return body + "</svg>\n"
