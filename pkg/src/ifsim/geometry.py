"""Chart handling and embedded-plane distances.

States live in a 2d chart, either plain cartesian coordinates or polar
coordinates on an annulus.  All distances used anywhere in the package are
Euclidean distances between embedded points, so the chart only matters for
how a point is written down, never for how far apart two points are.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi

# chart name -> symbol names, in component order
CHART_SYMBOLS = {
    "cartesian2": ("x1", "x2"),
    "polar2d": ("r", "th"),
}


def check_chart(chart: str) -> str:
    if chart not in CHART_SYMBOLS:
        raise ValueError(f"unknown chart {chart!r}")
    return chart


def embed(chart: str, pts):
    """Map chart points (shape (..., 2)) to points in the plane."""
    pts = np.asarray(pts, dtype=float)
    if chart == "cartesian2":
        return pts
    if chart == "polar2d":
        r = pts[..., 0]
        th = pts[..., 1]
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    raise ValueError(f"unknown chart {chart!r}")


def chord(chart: str, a, b):
    """Euclidean distance between embedded chart points, broadcasting."""
    d = embed(chart, a) - embed(chart, b)
    return np.sqrt(np.sum(d * d, axis=-1))


def normalize(chart: str, pts):
    """Wrap angular components into [0, 2*pi).  Cartesian points pass through."""
    pts = np.array(pts, dtype=float)
    if chart == "polar2d":
        pts[..., 1] = np.mod(pts[..., 1], TWO_PI)
    return pts


def wrap_delta(dth):
    # shortest signed angular step, in [-pi, pi)
    return np.mod(np.asarray(dth, dtype=float) + np.pi, TWO_PI) - np.pi


def chart_lerp(chart: str, a, b, w: float):
    """Interpolate between two chart points, going the short way around in
    any angular component."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if chart == "polar2d":
        dth = wrap_delta(b[..., 1] - a[..., 1])
        out = np.empty(np.broadcast(a, b).shape)
        out[..., 0] = a[..., 0] + w * (b[..., 0] - a[..., 0])
        out[..., 1] = a[..., 1] + w * dth
        return out
    return a + w * (b - a)


def cell_diagonal(chart: str, spacing, at) -> float:
    """Embedded length of one grid cell with the given per-axis spacing,
    measured at the chart point `at`."""
    at = np.asarray(at, dtype=float)
    return float(chord(chart, at, at + np.asarray(spacing, dtype=float)))
