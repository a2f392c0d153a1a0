"""Episode-level glue: sensors -> observation -> spiking policy -> wheels.

An Agent owns the per-episode memory (actor LIF states, encoder states, the
5-frame event deque, previous wheel speeds, previous camera render) and the
normalization of each observation component to [0, 1].
"""

from __future__ import annotations

import numpy as np

from .actor import SpikingActor, decode_action
from .encoding import DEQUE_LEN, events_to_frame, fresh_deque, push_frame
from .sim.dvs import DvsCamera, render_and_events
from .vae import EventVae

DVS_SUBSTEPS = 5           # sensor ticks per control step (100 Hz vs 20 Hz)
CONTROL_DT = 0.05


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class Agent:
    """A spiking policy plus its sensing state for one episode at a time."""

    def __init__(self, actor: SpikingActor, vae: EventVae | None = None,
                 v_min: float = 0.05, v_max: float = 1.0,
                 lidar_max: float = 10.0, camera: DvsCamera | None = None):
        if actor.config.multimodal and vae is None:
            raise ValueError("multimodal actor needs a trained event encoder")
        self.actor = actor
        self.vae = vae if actor.config.multimodal else None
        self.v_min = v_min
        self.v_max = v_max
        self.lidar_max = lidar_max
        self.camera = camera or DvsCamera()
        self.reset()

    @property
    def multimodal(self) -> bool:
        return self.vae is not None

    def reset(self) -> None:
        """Fresh episode: zero network states, zero-frame deque, no history."""
        self.actor_states = self.actor.new_episode_state(())
        self.vae_states = self.vae.new_episode_state(1) if self.multimodal else None
        self.deque = fresh_deque()
        self.prev_wheels = (0.0, 0.0)
        self.prev_image = None
        self.frames_last_step = 0

    # -- observation ----------------------------------------------------

    def robot_state(self, world) -> np.ndarray:
        x, y, theta = world.robot_pose
        dx, dy = world.goal[0] - x, world.goal[1] - y
        diag = 2.0 * np.sqrt(2.0) * world.half_extent
        dist = np.hypot(dx, dy) / diag
        heading = np.arctan2(dy, dx) - theta
        heading = (heading + np.pi) % (2.0 * np.pi) - np.pi
        v = 0.5 * (self.prev_wheels[0] + self.prev_wheels[1])
        omega = (self.prev_wheels[1] - self.prev_wheels[0]) / world.axle_length
        omega_max = (self.v_max - self.v_min) / world.axle_length
        return np.array([
            np.clip(dist, 0.0, 1.0),
            (heading + np.pi) / (2.0 * np.pi),
            np.clip((v - self.v_min) / (self.v_max - self.v_min), 0.0, 1.0),
            np.clip((omega + omega_max) / (2.0 * omega_max), 0.0, 1.0),
        ])

    def observe(self, world) -> np.ndarray:
        """Build the normalized observation vector for the current world."""
        parts = [self.robot_state(world), world.lidar() / self.lidar_max]
        if self.multimodal:
            mu, self.vae_states = self.vae.dvs_state(self.deque, self.vae_states)
            parts.append(_sigmoid(mu))
        return np.concatenate(parts)

    # -- acting -----------------------------------------------------------

    def act(self, obs: np.ndarray, rng: np.random.Generator, noise: np.ndarray | None = None):
        """Policy forward; optional additive exploration noise on the action.

        Returns (executed action in [0,1]^2, wheel speeds).
        """
        action, _, self.actor_states, _ = self.actor.forward(obs, self.actor_states, rng)
        if noise is not None:
            action = np.clip(action + noise, 0.0, 1.0)
        wheels = decode_action(action, self.v_min, self.v_max)
        return action, wheels

    def step_env(self, world, wheels) -> str:
        """Advance one control step (5 sensor ticks), filling the event deque."""
        event = "none"
        self.frames_last_step = 0
        for _ in range(DVS_SUBSTEPS):
            sub = world.substep(wheels[0], wheels[1], CONTROL_DT / DVS_SUBSTEPS)
            if self.multimodal:
                t_us = int(round(world.time * 1e6))
                events, image = render_and_events(world, self.camera,
                                                  self.prev_image, t_us)
                frame = events_to_frame(events, (t_us, t_us),
                                        self.camera.size, self.camera.size)
                self.deque = push_frame(self.deque, frame)
                self.prev_image = image
                self.frames_last_step += 1
            if sub != "none":
                event = sub
                break
        self.prev_wheels = wheels
        return event
