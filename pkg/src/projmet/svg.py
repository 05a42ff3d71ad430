"""Tiny deterministic SVG emitter for balls, curve bundles, and heatmaps.

String assembly only -- same input, same bytes, no clock and no RNG --
so CLI artifacts can be diffed across runs.  Viewports are fixed:
640x640 for balls/heatmaps, 800x520 for curve bundles.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_LOW = (18, 58, 109)    # heatmap endpoints, lerped in RGB
_HIGH = (242, 199, 68)


def _f(x: float) -> str:
    return f"{float(x):.6g}"


def _header(w: int, h: int, title: str) -> list:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff" stroke="#222222"/>',
    ]
    if title:
        out.append(
            f'<text x="{w // 2}" y="22" font-family="monospace" font-size="14" '
            f'text-anchor="middle">{title}</text>'
        )
    return out


def _scaler(pts: np.ndarray, w: int, h: int, margin: float = 48.0):
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    s = min((w - 2 * margin) / span[0], (h - 2 * margin) / span[1])
    cx, cy = 0.5 * (lo + hi)

    def to_px(p):
        return (w / 2 + s * (p[..., 0] - cx), h / 2 - s * (p[..., 1] - cy))

    return to_px


def _path(xs, ys, close: bool) -> str:
    cmds = [f"M {_f(xs[0])} {_f(ys[0])}"]
    cmds += [f"L {_f(a)} {_f(b)}" for a, b in zip(xs[1:], ys[1:])]
    if close:
        cmds.append("Z")
    return " ".join(cmds)


def ball_svg(boundary: np.ndarray, title: str = "") -> str:
    """Closed unit-sphere curve of a 2D metric, axes through the origin."""
    pts = np.asarray(boundary, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three planar boundary points")
    w = h = 640
    frame = np.concatenate([pts, [[0.0, 0.0]]])  # keep the origin in view
    to_px = _scaler(frame, w, h)
    out = _header(w, h, title)
    ox, oy = to_px(np.zeros(2))
    out.append(f'<line x1="{_f(ox)}" y1="40" x2="{_f(ox)}" y2="{h - 40}" stroke="#cccccc"/>')
    out.append(f'<line x1="40" y1="{_f(oy)}" x2="{w - 40}" y2="{_f(oy)}" stroke="#cccccc"/>')
    xs, ys = to_px(pts)
    out.append(
        f'<path d="{_path(xs, ys, close=True)}" fill="none" stroke="{PALETTE[0]}" stroke-width="2"/>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def curves_svg(
    curves: Sequence[np.ndarray],
    labels: Optional[Sequence[str]] = None,
    title: str = "",
) -> str:
    """Polyline bundle with a legend; colors cycle in input order."""
    if not curves:
        raise ValueError("no curves to draw")
    arrs = [np.asarray(c, dtype=float) for c in curves]
    for a in arrs:
        if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 2:
            raise ValueError("each curve must be an (m, 2) array with m >= 2")
    w, h = 800, 520
    to_px = _scaler(np.concatenate(arrs), w, h)
    out = _header(w, h, title)
    for k, a in enumerate(arrs):
        xs, ys = to_px(a)
        color = PALETTE[k % len(PALETTE)]
        out.append(
            f'<path d="{_path(xs, ys, close=False)}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
    if labels:
        for k, lab in enumerate(labels):
            y = 46 + 18 * k
            color = PALETTE[k % len(PALETTE)]
            out.append(f'<line x1="{w - 170}" y1="{y - 4}" x2="{w - 140}" y2="{y - 4}" '
                       f'stroke="{color}" stroke-width="3"/>')
            out.append(f'<text x="{w - 132}" y="{y}" font-family="monospace" '
                       f'font-size="12">{lab}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap_svg(values: np.ndarray, title: str = "") -> str:
    """Cell grid of scalars as colored rects with min/max annotated.

    Row index runs along x, column index along y (matching the
    fractional-cell grids elsewhere); (0, 0) lands bottom-left.
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 2:
        raise ValueError("heatmap needs a 2D value grid")
    w = h = 640
    pad, legend_h = 48, 40
    vmin, vmax = float(np.min(vals)), float(np.max(vals))
    span = vmax - vmin
    nx, ny = vals.shape
    cw = (w - 2 * pad) / nx
    ch = (h - 2 * pad - legend_h) / ny
    out = _header(w, h, title)
    for i in range(nx):
        for j in range(ny):
            t = 0.5 if span <= 0 else (vals[i, j] - vmin) / span
            rgb = tuple(round(a + t * (b - a)) for a, b in zip(_LOW, _HIGH))
            x = pad + i * cw
            y = h - pad - legend_h - (j + 1) * ch
            out.append(
                f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cw + 0.5)}" height="{_f(ch + 0.5)}" '
                f'fill="rgb({rgb[0]},{rgb[1]},{rgb[2]})"/>'
            )
    out.append(
        f'<text x="{pad}" y="{h - 18}" font-family="monospace" font-size="13">'
        f"min={vmin:.4f} max={vmax:.4f}</text>"
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
