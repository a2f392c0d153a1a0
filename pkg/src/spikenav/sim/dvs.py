"""Synthetic event camera: forward pinhole silhouette renders + change events.

Obstacles (static polygons and active movers, not the arena walls) render as
filled vertical silhouettes via a per-column raycast; intensity falls off
with depth as 1/(1 + d/5) over a dim background.  Per-pixel log-intensity
changes beyond a contrast threshold emit (t, x, y, polarity) events, which
upstream code aggregates into binary frames at the sensor rate.
"""

from __future__ import annotations

import numpy as np

from ..encoding import EVENT_DTYPE
from . import geometry

IMAGE_SIZE = 128
HFOV = np.deg2rad(90.0)
OBSTACLE_HEIGHT = 1.0      # meters; camera sits at half height
BACKGROUND = 0.1
DEPTH_SCALE = 5.0          # intensity = 1 / (1 + depth / DEPTH_SCALE)
CONTRAST = 0.15
LOG_EPS = 1e-3
MAX_DEPTH = 30.0


class DvsCamera:
    """Fixed forward-mounted virtual camera, one render per sensor tick."""

    def __init__(self, size: int = IMAGE_SIZE, hfov: float = HFOV,
                 contrast: float = CONTRAST):
        self.size = size
        self.contrast = contrast
        self.focal = (size / 2.0) / np.tan(hfov / 2.0)
        offsets = (np.arange(size) - (size - 1) / 2.0) / self.focal
        self._col_angles = -np.arctan(offsets)       # left column = left of heading
        self._rows = np.abs(np.arange(size) - (size - 1) / 2.0)[:, None]

    def render(self, world) -> np.ndarray:
        """(H, W) float image of obstacle silhouettes from the robot's pose."""
        x, y, theta = world.robot_pose
        origin = np.array([x, y])
        angles = theta + self._col_angles
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

        seg_a, seg_b = _obstacle_edges(world)
        depth = geometry.rays_segments(origin, dirs, seg_a, seg_b) \
            if len(seg_a) else np.full(self.size, np.inf)
        movers = world.active_movers()
        if movers:
            centers = world.mover_positions()
            radii = np.array([o.radius for o in movers])
            depth = np.minimum(depth, geometry.rays_circles(origin, dirs, centers, radii))

        hit = np.isfinite(depth) & (depth < MAX_DEPTH)
        depth = np.where(hit, depth, MAX_DEPTH)
        perp = np.maximum(depth * np.cos(self._col_angles), 1e-6)
        half_px = self.focal * (OBSTACLE_HEIGHT / 2.0) / perp
        intensity = np.where(hit, 1.0 / (1.0 + depth / DEPTH_SCALE), BACKGROUND)
        image = np.where((self._rows <= half_px) & hit,
                         intensity[None, :], BACKGROUND)
        return image.astype(np.float32)


def _obstacle_edges(world):
    a_list, b_list = [], []
    for poly in world.static_obstacles:
        n = len(poly)
        for i in range(n):
            a_list.append(poly[i])
            b_list.append(poly[(i + 1) % n])
    if not a_list:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.asarray(a_list), np.asarray(b_list)


def brightness_events(prev_image: np.ndarray, image: np.ndarray, t_us: int,
                      contrast: float = CONTRAST) -> np.ndarray:
    """Per-pixel log-brightness change events between two renders."""
    dlog = np.log(image + LOG_EPS) - np.log(prev_image + LOG_EPS)
    ys, xs = np.nonzero(np.abs(dlog) > contrast)
    ev = np.empty(len(ys), dtype=EVENT_DTYPE)
    ev["t"] = t_us
    ev["x"] = xs
    ev["y"] = ys
    ev["p"] = np.where(dlog[ys, xs] > 0, 1, -1)
    return ev


def render_and_events(world, camera: DvsCamera, prev_image: np.ndarray | None,
                      t_us: int, contrast: float | None = None):
    """Render the current view and emit events against the previous render.

    Returns (events, image); with no previous render the event set is empty
    (the first frame defines the reference brightness).
    """
    image = camera.render(world)
    if prev_image is None:
        return np.empty(0, dtype=EVENT_DTYPE), image
    c = camera.contrast if contrast is None else contrast
    return brightness_events(prev_image, image, t_us, c), image
