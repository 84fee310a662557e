"""Minimal SVG figures: matrix heat-maps, a cumulative curve and AFS scatter plots."""

from __future__ import annotations

import math
from html import escape

import numpy as np

_PALETTE = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"]


def _lerp_color(t: float) -> str:
    # blue (low) -> white -> red (high)
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        a = t / 0.5
        r, g, b = 0.23 + 0.77 * a, 0.30 + 0.70 * a, 0.75 + 0.25 * a
    else:
        a = (t - 0.5) / 0.5
        r, g, b = 1.0 - 0.29 * a, 1.0 - 0.98 * a, 1.0 - 0.85 * a
    return "#{:02x}{:02x}{:02x}".format(int(r * 255), int(g * 255), int(b * 255))


def _doc(width, height, body, title):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
        f"<title>{escape(title)}</title>\n" + "\n".join(body) + "\n</svg>\n"
    )


def heatmap(matrix, title: str, labels=None, center: float | None = None, cell: int = 36) -> str:
    """Colour-coded square matrix; NaN cells are left grey."""
    m = np.asarray(matrix, dtype=float)
    n = len(m)
    labels = list(range(1, n + 1)) if labels is None else list(labels)
    finite = m[np.isfinite(m)]
    lo, hi = (float(finite.min()), float(finite.max())) if len(finite) else (0.0, 1.0)
    if center is not None:
        span = max(abs(hi - center), abs(center - lo)) or 1.0
        lo, hi = center - span, center + span
    span = (hi - lo) or 1.0
    pad = 40
    body = [f'<text x="{pad}" y="20" font-size="13">{escape(title)}</text>']
    for i in range(n):
        body.append(f'<text x="{pad - 6}" y="{pad + 10 + i * cell + cell / 2}" text-anchor="end">{escape(str(labels[i]))}</text>')
        body.append(f'<text x="{pad + i * cell + cell / 2}" y="{pad + 6 + n * cell + 14}" text-anchor="middle">{escape(str(labels[i]))}</text>')
        for j in range(n):
            v = m[i, j]
            fill = "#cccccc" if not math.isfinite(v) else _lerp_color((v - lo) / span)
            text = "" if not math.isfinite(v) else f"{v:.2f}"
            x, y = pad + j * cell, pad + 10 + i * cell
            body.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}"/>')
            body.append(f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" text-anchor="middle" font-size="9">{text}</text>')
    size = pad + n * cell + 40
    return _doc(size, size, body, title)


def _axes(x0, y0, w, h, xlim, ylim, xlabel, ylabel):
    body = [
        f'<line x1="{x0}" y1="{y0 + h}" x2="{x0 + w}" y2="{y0 + h}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y0 + h}" stroke="black"/>',
        f'<text x="{x0 + w / 2}" y="{y0 + h + 32}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="{x0 - 36}" y="{y0 + h / 2}" text-anchor="middle" transform="rotate(-90 {x0 - 36} {y0 + h / 2})">{escape(ylabel)}</text>',
    ]
    for t in np.linspace(0, 1, 5):
        xv = xlim[0] + t * (xlim[1] - xlim[0])
        yv = ylim[0] + t * (ylim[1] - ylim[0])
        body.append(f'<text x="{x0 + t * w}" y="{y0 + h + 15}" text-anchor="middle">{xv:.3g}</text>')
        body.append(f'<text x="{x0 - 5}" y="{y0 + h - t * h + 4}" text-anchor="end">{yv:.3g}</text>')
    return body


def line_plot(x, y, title: str, xlabel: str, ylabel: str, max_points: int = 2000) -> str:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) > max_points:
        idx = np.unique(np.linspace(0, len(x) - 1, max_points).round().astype(int))
        x, y = x[idx], y[idx]
    x0, y0, w, h = 60, 30, 420, 300
    xlim = (float(x.min()), float(x.max()) or 1.0)
    ylim = (float(y.min()), float(y.max()) or 1.0)
    sx = lambda v: x0 + (v - xlim[0]) / ((xlim[1] - xlim[0]) or 1) * w
    sy = lambda v: y0 + h - (v - ylim[0]) / ((ylim[1] - ylim[0]) or 1) * h
    pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x, y))
    body = [f'<text x="{x0}" y="18" font-size="13">{escape(title)}</text>']
    body += _axes(x0, y0, w, h, xlim, ylim, xlabel, ylabel)
    body.append(f'<polyline points="{pts}" fill="none" stroke="{_PALETTE[0]}" stroke-width="1.5"/>')
    return _doc(x0 + w + 20, y0 + h + 50, body, title)


def scatter(x, y, groups, title: str, xlabel: str, ylabel: str) -> str:
    """Points coloured by integer group label."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    groups = np.asarray(groups)
    x0, y0, w, h = 60, 30, 420, 300
    xlim = (float(np.nanmin(x)), float(np.nanmax(x)))
    ylim = (float(np.nanmin(y)), float(np.nanmax(y)))
    sx = lambda v: x0 + (v - xlim[0]) / ((xlim[1] - xlim[0]) or 1) * w
    sy = lambda v: y0 + h - (v - ylim[0]) / ((ylim[1] - ylim[0]) or 1) * h
    body = [f'<text x="{x0}" y="18" font-size="13">{escape(title)}</text>']
    body += _axes(x0, y0, w, h, xlim, ylim, xlabel, ylabel)
    codes = {g: i for i, g in enumerate(sorted(set(groups.tolist())))}
    for a, b, g in zip(x, y, groups):
        if math.isfinite(a) and math.isfinite(b):
            color = _PALETTE[codes[g] % len(_PALETTE)]
            body.append(f'<circle cx="{sx(a):.1f}" cy="{sy(b):.1f}" r="3" fill="{color}" fill-opacity="0.8"/>')
    return _doc(x0 + w + 20, y0 + h + 50, body, title)
