"""Planar ray casting and distance queries used by the simulator sensors."""

from __future__ import annotations

import numpy as np


def ray_segments(origin, direction, seg_a, seg_b):
    """Smallest positive ray parameter hitting any of the segments.

    origin (2,), direction (2,) unit; seg_a/seg_b (M, 2).  Returns +inf when
    nothing is hit.
    """
    if len(seg_a) == 0:
        return np.inf
    s = seg_b - seg_a                                  # (M, 2)
    rel = seg_a - origin
    denom = direction[0] * s[:, 1] - direction[1] * s[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * s[:, 1] - rel[:, 1] * s[:, 0]) / denom
        u = (rel[:, 0] * direction[1] - rel[:, 1] * direction[0]) / denom
    ok = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    return float(t[ok].min()) if ok.any() else np.inf


def rays_segments(origin, directions, seg_a, seg_b):
    """Vectorized ray_segments for directions (R, 2); returns (R,) distances."""
    if len(seg_a) == 0:
        return np.full(len(directions), np.inf)
    s = seg_b - seg_a                                  # (M, 2)
    rel = seg_a - origin                               # (M, 2)
    denom = directions[:, 0:1] * s[None, :, 1] - directions[:, 1:2] * s[None, :, 0]
    rel_cross_s = rel[:, 0] * s[:, 1] - rel[:, 1] * s[:, 0]           # (M,)
    rel_cross_d = (rel[None, :, 0] * directions[:, 1:2]
                   - rel[None, :, 1] * directions[:, 0:1])            # (R, M)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = rel_cross_s[None, :] / denom
        u = rel_cross_d / denom
    ok = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    t = np.where(ok, t, np.inf)
    return t.min(axis=1)


def rays_circles(origin, directions, centers, radii):
    """Vectorized ray-circle intersection; (R,) smallest positive distances."""
    if len(centers) == 0:
        return np.full(len(directions), np.inf)
    rel = centers - origin                             # (M, 2)
    m = directions @ rel.T                             # (R, M) projection
    q = (rel * rel).sum(axis=1)[None, :] - radii[None, :] ** 2
    disc = m * m - q
    with np.errstate(invalid="ignore"):
        root = np.sqrt(disc)
    t_near = m - root
    t_far = m + root
    t = np.where(t_near > 1e-9, t_near, t_far)         # inside a circle: exit point
    ok = (disc >= 0.0) & (t > 1e-9)
    t = np.where(ok, t, np.inf)
    return t.min(axis=1)


def point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return float(np.hypot(*(p - a)))
    u = np.clip(float((p - a) @ ab) / denom, 0.0, 1.0)
    closest = a + u * ab
    return float(np.hypot(*(p - closest)))


def point_in_polygon(p, vertices) -> bool:
    """Even-odd rule over polygon edges."""
    x, y = p
    n = len(vertices)
    inside = False
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xint:
                inside = not inside
    return inside


def point_polygon_distance(p, vertices) -> float:
    """Distance from p to the polygon (0 inside)."""
    if point_in_polygon(p, vertices):
        return 0.0
    n = len(vertices)
    return min(point_segment_distance(p, vertices[i], vertices[(i + 1) % n])
               for i in range(n))
