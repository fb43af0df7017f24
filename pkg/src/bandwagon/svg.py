"""Minimal deterministic SVG phase portraits.

Output depends only on the inputs: coordinates are printed with a fixed
number of digits and elements are emitted in a fixed order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["PortraitLayers", "render_portrait"]

_W, _H, _PAD = 640, 480, 40
_COLORS = {"stable": "#1f5fbf", "unstable": "#bf3f1f", "cycle": "#2f8f2f", "nullcline": "#888888"}


class PortraitLayers:
    """Collects curves and points to be drawn, in insertion order."""

    def __init__(self, z_range=(-3.0, 3.0), m_range=(-1.05, 1.05)):
        self.z_range, self.m_range = z_range, m_range
        self.curves = []
        self.points = []

    def add_curve(self, zm, role, label=""):
        arr = np.asarray(zm, dtype=float).reshape(-1, 2)
        self.curves.append((arr, role, label))

    def add_point(self, z, m, label):
        self.points.append((float(z), float(m), label))


def _xy(layers, z, m):
    z0, z1 = layers.z_range
    m0, m1 = layers.m_range
    x = _PAD + (z - z0) / (z1 - z0) * (_W - 2 * _PAD)
    y = _H - _PAD - (m - m0) / (m1 - m0) * (_H - 2 * _PAD)
    return x, y


def _path(layers, arr):
    z0, z1 = layers.z_range
    keep = (arr[:, 0] >= z0) & (arr[:, 0] <= z1)
    segs, cur = [], []
    for ok, (z, m) in zip(keep, arr):
        if ok:
            cur.append("%.2f,%.2f" % _xy(layers, z, m))
        elif cur:
            segs.append(cur)
            cur = []
    if cur:
        segs.append(cur)
    return " ".join("M" + " L".join(s) for s in segs if len(s) > 1)


def render_portrait(layers, title=""):
    """Return the SVG document as a string."""
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
    ]
    xa0, ya = _xy(layers, layers.z_range[0], 0.0)
    xa1, _ = _xy(layers, layers.z_range[1], 0.0)
    xo, yb = _xy(layers, 0.0, layers.m_range[0])
    _, yt = _xy(layers, 0.0, layers.m_range[1])
    out.append(f'<line x1="{xa0:.2f}" y1="{ya:.2f}" x2="{xa1:.2f}" y2="{ya:.2f}" stroke="black"/>')
    out.append(f'<line x1="{xo:.2f}" y1="{yb:.2f}" x2="{xo:.2f}" y2="{yt:.2f}" stroke="black"/>')
    out.append(f'<text x="{_W - _PAD:.0f}" y="{ya - 6:.2f}" font-size="12">z</text>')
    out.append(f'<text x="{xo + 6:.2f}" y="{_PAD - 6:.0f}" font-size="12">m</text>')
    if title:
        out.append(f'<text x="{_PAD}" y="20" font-size="14">{title}</text>')
    for arr, role, label in layers.curves:
        d = _path(layers, arr)
        if not d:
            continue
        dash = ' stroke-dasharray="4 3"' if role == "nullcline" else ""
        out.append(f'<path d="{d}" fill="none" stroke="{_COLORS.get(role, "black")}" '
                   f'stroke-width="1.5"{dash}><title>{label}</title></path>')
    for z, m, label in layers.points:
        x, y = _xy(layers, z, m)
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3.5" fill="black"><title>{label}</title></circle>')
        out.append(f'<text x="{x + 5:.2f}" y="{y - 5:.2f}" font-size="12">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
