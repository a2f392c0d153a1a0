"""2-D world: differential-drive robot, polygon obstacles, reciprocating movers.

The map is centered on the origin.  Dynamic obstacles are discs sliding back
and forth along fixed segments (triangle-wave arc length), reversing exactly
at the endpoints; they pass through each other but define collision geometry
for the robot.  Physics advances in fixed substeps so collisions are detected
within one substep of interpenetration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry

ROBOT_RADIUS = 0.2
AXLE_LENGTH = 0.3
GOAL_RADIUS = 0.5
LIDAR_BEAMS = 18
LIDAR_FOV = np.pi          # 180 degrees forward
LIDAR_MAX_RANGE = 10.0


@dataclass
class DynamicObstacle:
    """Disc reciprocating along the segment p0 -> p1 with constant speed."""

    p0: np.ndarray
    p1: np.ndarray
    vx: float
    vy: float
    radius: float = 0.15
    phase: float = 0.0          # initial fraction of the segment (0..1)

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=np.float64)
        self.p1 = np.asarray(self.p1, dtype=np.float64)
        self.length = float(np.hypot(*(self.p1 - self.p0)))
        self.speed = float(np.hypot(self.vx, self.vy))
        if self.length <= 0:
            raise ValueError("dynamic obstacle segment has zero length")

    def position(self, t: float) -> np.ndarray:
        s = (self.phase * self.length + self.speed * t) % (2.0 * self.length)
        d = s if s <= self.length else 2.0 * self.length - s
        return self.p0 + (d / self.length) * (self.p1 - self.p0)


@dataclass
class World:
    half_extent: float = 10.0                    # 20 m x 20 m default
    static_obstacles: list = field(default_factory=list)   # list of (N,2) arrays
    dynamic_obstacles: list = field(default_factory=list)
    robot_pose: np.ndarray = field(default_factory=lambda: np.zeros(3))
    wheel_speeds: tuple = (0.0, 0.0)
    goal: np.ndarray = field(default_factory=lambda: np.zeros(2))
    time: float = 0.0
    dynamic_enabled: bool = True
    robot_radius: float = ROBOT_RADIUS
    axle_length: float = AXLE_LENGTH
    goal_radius: float = GOAL_RADIUS

    def __post_init__(self):
        self.static_obstacles = [np.asarray(p, dtype=np.float64)
                                 for p in self.static_obstacles]
        self.robot_pose = np.asarray(self.robot_pose, dtype=np.float64)
        self.goal = np.asarray(self.goal, dtype=np.float64)
        self._static_edges = self._collect_edges()

    def _collect_edges(self):
        a_list, b_list = [], []
        e = self.half_extent
        walls = np.array([[-e, -e], [e, -e], [e, e], [-e, e]])
        for i in range(4):
            a_list.append(walls[i])
            b_list.append(walls[(i + 1) % 4])
        for poly in self.static_obstacles:
            n = len(poly)
            for i in range(n):
                a_list.append(poly[i])
                b_list.append(poly[(i + 1) % n])
        return np.asarray(a_list, dtype=np.float64), np.asarray(b_list, dtype=np.float64)

    def copy(self) -> "World":
        w = World(
            half_extent=self.half_extent,
            static_obstacles=[p.copy() for p in self.static_obstacles],
            dynamic_obstacles=[DynamicObstacle(o.p0.copy(), o.p1.copy(), o.vx, o.vy,
                                               o.radius, o.phase)
                               for o in self.dynamic_obstacles],
            robot_pose=self.robot_pose.copy(),
            wheel_speeds=self.wheel_speeds,
            goal=self.goal.copy(),
            time=self.time,
            dynamic_enabled=self.dynamic_enabled,
            robot_radius=self.robot_radius,
            axle_length=self.axle_length,
            goal_radius=self.goal_radius,
        )
        return w

    # -- queries --------------------------------------------------------

    def active_movers(self) -> list[DynamicObstacle]:
        return self.dynamic_obstacles if self.dynamic_enabled else []

    def mover_positions(self) -> np.ndarray:
        movers = self.active_movers()
        if not movers:
            return np.zeros((0, 2))
        return np.stack([o.position(self.time) for o in movers])

    def in_bounds(self, p, margin: float = 0.0) -> bool:
        e = self.half_extent - margin
        return bool(-e <= p[0] <= e and -e <= p[1] <= e)

    def point_collides(self, p, radius: float) -> bool:
        if not self.in_bounds(p, margin=radius):
            return True
        for poly in self.static_obstacles:
            if geometry.point_polygon_distance(p, poly) <= radius:
                return True
        for o, pos in zip(self.active_movers(), self.mover_positions()):
            if np.hypot(*(p - pos)) <= radius + o.radius:
                return True
        return False

    def at_goal(self) -> bool:
        return bool(np.hypot(*(self.robot_pose[:2] - self.goal)) <= self.goal_radius)

    def goal_distance(self) -> float:
        return float(np.hypot(*(self.robot_pose[:2] - self.goal)))

    # -- dynamics ---------------------------------------------------------

    def substep(self, v_left: float, v_right: float, dt: float) -> str:
        """Advance one physics tick; returns "none", "collision", or "goal"."""
        x, y, theta = self.robot_pose
        v = 0.5 * (v_left + v_right)
        omega = (v_right - v_left) / self.axle_length
        x += v * np.cos(theta) * dt
        y += v * np.sin(theta) * dt
        theta = (theta + omega * dt + np.pi) % (2.0 * np.pi) - np.pi
        self.robot_pose = np.array([x, y, theta])
        self.wheel_speeds = (v_left, v_right)
        self.time += dt
        if self.point_collides(self.robot_pose[:2], self.robot_radius):
            return "collision"
        if self.at_goal():
            return "goal"
        return "none"

    def step(self, v_left: float, v_right: float, dt: float = 0.05,
             substeps: int = 5) -> str:
        """One control step as ``substeps`` physics ticks; first terminal wins."""
        for _ in range(substeps):
            event = self.substep(v_left, v_right, dt / substeps)
            if event != "none":
                return event
        return "none"

    # -- lidar --------------------------------------------------------------

    def lidar(self, n_beams: int = LIDAR_BEAMS, fov: float = LIDAR_FOV,
              max_range: float = LIDAR_MAX_RANGE) -> np.ndarray:
        """Forward arc scan: exact ray casts, evenly spaced beams, no-hit -> max."""
        x, y, theta = self.robot_pose
        origin = np.array([x, y])
        rel = np.linspace(-fov / 2.0, fov / 2.0, n_beams)
        angles = theta + rel
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        seg_a, seg_b = self._static_edges
        dist = geometry.rays_segments(origin, dirs, seg_a, seg_b)
        movers = self.active_movers()
        if movers:
            centers = self.mover_positions()
            radii = np.array([o.radius for o in movers])
            dist = np.minimum(dist, geometry.rays_circles(origin, dirs, centers, radii))
        return np.clip(dist, None, max_range)


# ---------------------------------------------------------------------------
# Map files
# ---------------------------------------------------------------------------

def world_to_json(world: World) -> dict:
    return {
        "half_extent": world.half_extent,
        "static_obstacles": [p.tolist() for p in world.static_obstacles],
        "dynamic_obstacles": [
            {"p0": o.p0.tolist(), "p1": o.p1.tolist(), "vx": o.vx, "vy": o.vy,
             "radius": o.radius, "phase": o.phase}
            for o in world.dynamic_obstacles
        ],
        "robot_radius": world.robot_radius,
        "axle_length": world.axle_length,
        "goal_radius": world.goal_radius,
    }


def world_from_json(doc: dict) -> World:
    return World(
        half_extent=float(doc["half_extent"]),
        static_obstacles=[np.asarray(p) for p in doc.get("static_obstacles", [])],
        dynamic_obstacles=[
            DynamicObstacle(np.asarray(o["p0"]), np.asarray(o["p1"]),
                            float(o["vx"]), float(o["vy"]),
                            float(o.get("radius", 0.15)), float(o.get("phase", 0.0)))
            for o in doc.get("dynamic_obstacles", [])
        ],
        robot_radius=float(doc.get("robot_radius", ROBOT_RADIUS)),
        axle_length=float(doc.get("axle_length", AXLE_LENGTH)),
        goal_radius=float(doc.get("goal_radius", GOAL_RADIUS)),
    )


def save_map(path, world: World) -> None:
    Path(path).write_text(json.dumps(world_to_json(world), indent=2))


def load_map(path) -> World:
    return world_from_json(json.loads(Path(path).read_text()))
