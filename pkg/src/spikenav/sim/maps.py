"""Built-in worlds: desk-scale 10 m maps and the full 20 m arena.

The dynamic maps carry eleven reciprocating movers whose (vx, vy) speeds are
the standard evaluation set: five horizontal at 1.4 m/s, four vertical at
1.4 m/s, two diagonal at 1.2 and 1.3 m/s per axis; all faster than the robot.
Several movers are thin enough to slip between the 18 lidar beams at range,
which is what makes the event channel informative.  Segment endpoints are
repo-defined; mover paths keep clear of static geometry.
"""

from __future__ import annotations

import numpy as np

from .world import DynamicObstacle, World


def _rect(cx, cy, hw, hh):
    return np.array([[cx - hw, cy - hh], [cx + hw, cy - hh],
                     [cx + hw, cy + hh], [cx - hw, cy + hh]])


# (p0, p1, vx, vy, radius, phase) per mover; scaled by the map half extent / 5
_MOVERS = [
    ((-3.5, 3.8), (3.5, 3.8), 1.4, 0.0, 0.15, 0.00),
    ((-4.0, 1.2), (4.0, 1.2), 1.4, 0.0, 0.25, 0.33),
    ((-3.5, -1.6), (3.5, -1.6), 1.4, 0.0, 0.15, 0.66),
    ((-3.5, -3.5), (3.0, 3.0), 1.2, 1.2, 0.18, 0.25),
    ((-3.6, -3.5), (-3.6, 3.5), 0.0, 1.4, 0.15, 0.10),
    ((0.0, -4.0), (0.0, 4.0), 0.0, 1.4, 0.25, 0.50),
    ((3.6, -3.5), (3.6, 3.5), 0.0, 1.4, 0.15, 0.80),
    ((-3.5, -3.8), (3.5, -3.8), 1.4, 0.0, 0.18, 0.50),
    ((-3.0, 3.0), (3.5, -3.5), 1.3, 1.3, 0.15, 0.60),
    ((-4.0, 2.6), (4.0, 2.6), 1.4, 0.0, 0.12, 0.15),
    ((-1.8, -3.8), (-1.8, 3.8), 0.0, 1.4, 0.12, 0.40),
]


def _movers(scale: float = 1.0):
    out = []
    for p0, p1, vx, vy, radius, phase in _MOVERS:
        out.append(DynamicObstacle(np.asarray(p0) * scale, np.asarray(p1) * scale,
                                   vx, vy, radius, phase))
    return out


def desk_empty() -> World:
    """Empty 10 m arena: walls only."""
    return World(half_extent=5.0, dynamic_enabled=False)


def desk_static() -> World:
    """10 m map with a central bar, a vertical bar, and a corner block."""
    return World(
        half_extent=5.0,
        static_obstacles=[
            _rect(-1.2, 0.0, 2.3, 0.4),
            _rect(2.2, -1.2, 0.4, 2.2),
            _rect(-2.2, 2.8, 0.7, 0.7),
        ],
        dynamic_enabled=False,
    )


def desk_dynamic() -> World:
    """10 m map with sparse blocks and the eleven reciprocating movers."""
    return World(
        half_extent=5.0,
        static_obstacles=[
            _rect(0.9, -2.6, 0.35, 0.35),
            _rect(2.4, 0.0, 0.35, 0.35),
            _rect(-2.7, -0.3, 0.35, 0.35),
        ],
        dynamic_obstacles=_movers(1.0),
        dynamic_enabled=True,
    )


def arena20() -> World:
    """20 m map: denser static geometry plus the eleven movers at 2x spread."""
    tri = np.array([[-8.9, 6.2], [-7.7, 6.2], [-8.3, 7.1]])
    return World(
        half_extent=10.0,
        static_obstacles=[
            _rect(-6.1, -4.3, 0.6, 0.6),
            _rect(4.6, 0.2, 0.9, 0.6),
            _rect(-1.6, 3.8, 0.5, 0.4),
            _rect(5.6, 3.8, 0.6, 0.4),
            _rect(2.0, -5.6, 1.0, 0.5),
            tri,
        ],
        dynamic_obstacles=_movers(2.0),
        dynamic_enabled=True,
    )


BUILTIN_MAPS = {
    "desk-empty": desk_empty,
    "desk-static": desk_static,
    "desk-dynamic": desk_dynamic,
    "arena20": arena20,
}


def get_map(name: str) -> World:
    if name not in BUILTIN_MAPS:
        raise KeyError(f"unknown map {name!r}; built-ins: {sorted(BUILTIN_MAPS)}")
    return BUILTIN_MAPS[name]()
