"""Geometric primitives: polylines, resampling, distances, rigid alignment.

A polyline is an (N, 2) float array of sub-pixel points, columns (x, y),
with x = column and y = row of the image raster (pixel centers at integer
coordinates).  All functions are pure.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateGeometryError

# Consecutive polyline points closer than this are considered coincident.
MIN_POINT_SEPARATION = 1e-9


def as_polyline(points) -> np.ndarray:
    """Validate and return a polyline as an (N, 2) float64 array.

    Requires at least 2 points, finite coordinates, and strictly positive
    separation between consecutive points.
    """
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ValueError(f"polyline must be (N, 2), got shape {p.shape}")
    if p.shape[0] < 2:
        raise ValueError("polyline needs at least 2 points")
    if not np.all(np.isfinite(p)):
        raise ValueError("polyline has non-finite coordinates")
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    if np.any(seg <= MIN_POINT_SEPARATION):
        raise ValueError("polyline has coincident consecutive points")
    return p


def dedupe_points(points, tol: float = MIN_POINT_SEPARATION) -> np.ndarray:
    """Drop consecutive points closer than tol; helper for building polylines."""
    p = np.asarray(points, dtype=np.float64)
    if len(p) == 0:
        return p.reshape(0, 2)
    keep = [0]
    for i in range(1, len(p)):
        if np.linalg.norm(p[i] - p[keep[-1]]) > tol:
            keep.append(i)
    return p[keep]


def polyline_length(p) -> float:
    """Total Euclidean arc length of a polyline, in pixels."""
    p = as_polyline(p)
    return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))


def cumulative_lengths(p: np.ndarray) -> np.ndarray:
    """Arc length from the first point to each vertex (len N, starts at 0)."""
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    return np.concatenate(([0.0], np.cumsum(seg)))


def point_at_arclength(p: np.ndarray, s: float) -> np.ndarray:
    """Point on the polyline at arc length s (clamped to [0, length])."""
    cum = cumulative_lengths(p)
    s = min(max(s, 0.0), cum[-1])
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(i, len(p) - 2)
    seg = cum[i + 1] - cum[i]
    t = 0.0 if seg == 0 else (s - cum[i]) / seg
    return p[i] + t * (p[i + 1] - p[i])


def resample(p, k: int) -> np.ndarray:
    """Resample a polyline to k points equally spaced in arc length.

    Endpoints are preserved exactly.  k must be >= 2.
    """
    if k < 2:
        raise ValueError(f"resample count must be >= 2, got {k}")
    p = as_polyline(p)
    cum = cumulative_lengths(p)
    total = cum[-1]
    targets = np.linspace(0.0, total, k)
    # interpolate x and y separately against cumulative arc length
    out = np.empty((k, 2))
    out[:, 0] = np.interp(targets, cum, p[:, 0])
    out[:, 1] = np.interp(targets, cum, p[:, 1])
    out[0] = p[0]
    out[-1] = p[-1]
    return out


def subcurve(p: np.ndarray, s0: float, s1: float) -> np.ndarray:
    """Sub-polyline between arc lengths s0 and s1 (s0 < s1), endpoints interpolated."""
    p = as_polyline(p)
    cum = cumulative_lengths(p)
    s0 = min(max(s0, 0.0), cum[-1])
    s1 = min(max(s1, 0.0), cum[-1])
    if s1 <= s0:
        raise ValueError("subcurve requires s0 < s1 within the polyline length")
    a = point_at_arclength(p, s0)
    b = point_at_arclength(p, s1)
    inner = p[(cum > s0) & (cum < s1)]
    pts = dedupe_points(np.vstack([[a], inner, [b]]))
    if len(pts) < 2:
        pts = np.vstack([a, b])
    return pts


def point_segment_distance(q, a, b) -> float:
    """Euclidean distance from point q to segment [a, b].

    Degenerate segments (a == b) fall back to point-to-point distance.
    """
    q = np.asarray(q, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom <= MIN_POINT_SEPARATION**2:
        return float(np.linalg.norm(q - a))
    t = float((q - a) @ ab) / denom
    t = min(max(t, 0.0), 1.0)
    return float(np.linalg.norm(q - (a + t * ab)))


def point_polyline_distance(q, p) -> float:
    """Distance from q to the closest point of polyline p."""
    p = np.asarray(p, dtype=np.float64)
    return min(
        point_segment_distance(q, p[i], p[i + 1]) for i in range(len(p) - 1)
    )


def rigid_align(src, dst):
    """Least-squares rigid (rotation + translation, no scaling) alignment.

    Both polylines must have the same point count with corresponding points.
    Returns (rotation_radians, translation (2,), transformed_src).
    """
    src = as_polyline(src)
    dst = as_polyline(dst)
    if src.shape != dst.shape:
        raise ValueError("rigid_align requires equal point counts")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d
    if np.max(np.linalg.norm(sc, axis=1)) <= MIN_POINT_SEPARATION:
        raise DegenerateGeometryError("source polyline points are all coincident")
    h = sc.T @ dc
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, d]) @ u.T
    angle = float(np.arctan2(r[1, 0], r[0, 0]))
    t = mu_d - r @ mu_s
    moved = (r @ src.T).T + t
    return angle, t, moved


def polyline_to_json(p) -> dict:
    """Encode a polyline as {"points": [[x, y], ...]}."""
    return {"points": [[float(x), float(y)] for x, y in np.asarray(p)]}


def polyline_from_json(obj) -> np.ndarray:
    return as_polyline(obj["points"])
