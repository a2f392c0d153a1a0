"""Multimodal spiking policy network.

Observations (robot state + laser scan + optional 64-dim event latent) are
population-encoded into Poisson spike trains, split into a laser-side branch
and an event-side branch (one spiking dense layer each, 20 outputs), fused by
element-wise addition, and pushed through a four-layer spiking decision stack.
Output spikes are counted over T timesteps; action = count / T per wheel.
Branch and decision layers share one learnable threshold each (tanh-bounded).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoding import PopulationParams, poisson_sample, population_activate, population_grad
from .snn import LayerState, LifConfig, SpikingDense, ThresholdSpec

ROBOT_DIM = 4
LASER_DIM = 18
DVS_DIM = 64
BRANCH_OUT = 20
ACTION_DIM = 2
DEFAULT_TIMESTEPS = 5


@dataclass
class Observation:
    """One control step's normalized sensor view; all components in [0, 1]."""

    robot_state: np.ndarray   # goal distance, goal heading, prev linear, prev angular
    laser_state: np.ndarray   # 18 ranges / max range
    dvs_state: np.ndarray | None = None   # squashed 64-dim event latent

    def vector(self) -> np.ndarray:
        parts = [self.robot_state, self.laser_state]
        if self.dvs_state is not None:
            parts.append(self.dvs_state)
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


@dataclass
class ActorConfig:
    multimodal: bool = True
    threshold_mode: str = "learnable"       # "learnable" or "fixed"
    threshold_init: float = 0.5
    pop_size: int = 10
    hidden: tuple = (256, 256, 256)
    timesteps: int = DEFAULT_TIMESTEPS
    current_decay: float = 0.5
    voltage_decay: float = 0.75

    def __post_init__(self):
        if self.threshold_mode not in ("learnable", "fixed"):
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")

    @property
    def n_states(self) -> int:
        return ROBOT_DIM + LASER_DIM + (DVS_DIM if self.multimodal else 0)

    @property
    def laser_neurons(self) -> int:
        return (ROBOT_DIM + LASER_DIM) * self.pop_size

    @property
    def dvs_neurons(self) -> int:
        return DVS_DIM * self.pop_size if self.multimodal else 0


def fuse(laser_spikes: np.ndarray, dvs_spikes: np.ndarray) -> np.ndarray:
    """Element-wise addition of the two 20-dim branch spike vectors."""
    if laser_spikes.shape != dvs_spikes.shape:
        raise ValueError(f"branch shapes differ: {laser_spikes.shape} vs {dvs_spikes.shape}")
    return laser_spikes + dvs_spikes


def decode_action(action: np.ndarray, v_min: float, v_max: float):
    """Map action in [0,1]^2 to wheel speeds: v = a * (v_max - v_min) + v_min."""
    action = np.asarray(action, dtype=np.float64)
    wheels = action * (v_max - v_min) + v_min
    return float(wheels[..., 0]), float(wheels[..., 1])


class SpikingActor:
    """Population encoder + per-modality branches + fused decision stack."""

    def __init__(self, config: ActorConfig, rng: np.random.Generator, dtype=np.float64):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.pop = PopulationParams(config.n_states, config.pop_size, dtype=np.float64)

        def make_layer(n_in, n_out):
            if config.threshold_mode == "learnable":
                th = ThresholdSpec.learnable_init(config.threshold_init)
            else:
                th = ThresholdSpec.fixed(config.threshold_init)
            lif = LifConfig(config.current_decay, config.voltage_decay, threshold=th)
            return SpikingDense(n_in, n_out, lif, rng, dtype=dtype)

        self.laser_branch = make_layer(config.laser_neurons, BRANCH_OUT)
        self.dvs_branch = make_layer(config.dvs_neurons, BRANCH_OUT) if config.multimodal else None
        sizes = (BRANCH_OUT,) + tuple(config.hidden) + (ACTION_DIM,)
        self.decision = [make_layer(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]

    # -- structure ----------------------------------------------------------

    def layers(self) -> list:
        out = [self.laser_branch]
        if self.dvs_branch is not None:
            out.append(self.dvs_branch)
        return out + self.decision

    def layer_names(self) -> list[str]:
        names = ["laser"]
        if self.dvs_branch is not None:
            names.append("dvs")
        return names + [f"dm{i}" for i in range(len(self.decision))]

    def thresholds(self) -> dict:
        return {name: layer.threshold
                for name, layer in zip(self.layer_names(), self.layers())}

    def params(self) -> dict:
        flat = {"pop.means": self.pop.means, "pop.stds": self.pop.stds}
        for name, layer in zip(self.layer_names(), self.layers()):
            for key, val in layer.params().items():
                flat[f"{name}.{key}"] = val
        return flat

    def load_params(self, tensors: dict) -> None:
        own = self.params()
        for name, arr in tensors.items():
            if name not in own:
                raise KeyError(f"unknown actor parameter {name!r}")
            own[name][...] = np.asarray(arr, dtype=own[name].dtype).reshape(own[name].shape)

    def new_episode_state(self, batch=()) -> list[LayerState]:
        lead = (batch,) if isinstance(batch, int) else tuple(batch)
        return [layer.zero_state(lead) for layer in self.layers()]

    # -- forward / backward -------------------------------------------------

    def forward(self, obs: np.ndarray, states: list[LayerState], rng: np.random.Generator,
                record: bool = False):
        """Run T timesteps on a (..., N) observation.

        Returns (action in [0,1]^2 quantized to 1/T, spike counts, new states,
        trace or None).  Branch spike trains are drawn laser-first so the
        laser-side stream is identical between multimodal and laser-only
        networks under the same seed.
        """
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1] != self.config.n_states:
            raise ValueError(f"observation has {obs.shape[-1]} dims, "
                             f"expected {self.config.n_states}")
        T = self.config.timesteps
        n_laser = self.config.laser_neurons
        strengths = population_activate(obs, self.pop)
        laser_trains = poisson_sample(strengths[..., :n_laser], T, rng).astype(self.dtype)
        if self.dvs_branch is not None:
            dvs_trains = poisson_sample(strengths[..., n_laser:], T, rng).astype(self.dtype)

        state_map = dict(zip(self.layer_names(), states))
        new_states = {}
        new_states["laser"], laser_out, tr_laser = self.laser_branch.forward_trace(
            state_map["laser"], list(laser_trains))
        if self.dvs_branch is not None:
            new_states["dvs"], dvs_out, tr_dvs = self.dvs_branch.forward_trace(
                state_map["dvs"], list(dvs_trains))
            seq = [fuse(a, b) for a, b in zip(laser_out, dvs_out)]
        else:
            seq = laser_out
        dm_traces = []
        for i, layer in enumerate(self.decision):
            new_states[f"dm{i}"], seq, tr = layer.forward_trace(state_map[f"dm{i}"], seq)
            dm_traces.append(tr)
        counts = np.sum(seq, axis=0)
        action = counts / float(T)

        trace = None
        if record:
            trace = {
                "obs": obs, "strengths": strengths,
                "laser": tr_laser, "dm": dm_traces,
                "dvs": tr_dvs if self.dvs_branch is not None else None,
            }
        ordered = [new_states[name] for name in self.layer_names()]
        return action, counts, ordered, trace

    def backward(self, trace: dict, d_action: np.ndarray):
        """Gradients of a scalar loss w.r.t. all actor parameters.

        ``d_action`` is dL/daction with the same lead shape as the forward
        observation; the spike-count readout contributes 1/T per timestep,
        fusion copies gradients to both branches, and the population encoder
        uses its straight-through estimator.  Returns (grads dict, dL/dobs);
        the observation gradient only matters when an upstream encoder is
        trained end-to-end.
        """
        if trace is None:
            raise ValueError("actor backward needs a trace recorded by forward")
        T = self.config.timesteps
        up = np.asarray(d_action, dtype=self.dtype) / float(T)
        upstream = [up] * T
        grads = {}
        for i in range(len(self.decision) - 1, -1, -1):
            layer_grads, upstream = self.decision[i].backward(trace["dm"][i], upstream)
            for key, val in layer_grads.items():
                grads[f"dm{i}.{key}"] = val
        g_laser, d_laser_trains = self.laser_branch.backward(trace["laser"], upstream)
        for key, val in g_laser.items():
            grads[f"laser.{key}"] = val
        if self.dvs_branch is not None:
            g_dvs, d_dvs_trains = self.dvs_branch.backward(trace["dvs"], upstream)
            for key, val in g_dvs.items():
                grads[f"dvs.{key}"] = val
            train_grads = np.concatenate(
                [np.stack(d_laser_trains), np.stack(d_dvs_trains)], axis=-1)
        else:
            train_grads = np.stack(d_laser_trains)
        dmu, dsig, dobs = population_grad(
            train_grads.astype(np.float64), trace["strengths"], trace["obs"], self.pop)
        grads["pop.means"] = dmu
        grads["pop.stds"] = dsig
        return grads, dobs


def ablation_config(mode: str, threshold: str = "learnable",
                    threshold_init: float = 0.5, **kwargs) -> ActorConfig:
    """Build the actor configuration for an ablation arm.

    ``mode``: "multimodal" (laser + events) or "laser-only" (the population-
    coded baseline without the event branch).  ``threshold``: "learnable" or
    "fixed"; fixed freezes every layer threshold at ``threshold_init``.
    """
    modes = {"multimodal": True, "laser-only": False}
    if mode not in modes:
        raise ValueError(f"unknown ablation mode {mode!r} (use multimodal|laser-only)")
    return ActorConfig(multimodal=modes[mode], threshold_mode=threshold,
                       threshold_init=threshold_init, **kwargs)


def save_actor(path, actor: SpikingActor) -> None:
    from .checkpoint import save_checkpoint

    cfg = actor.config
    save_checkpoint(path, actor.params(), metadata={
        "kind": "spiking-actor",
        "multimodal": cfg.multimodal,
        "threshold_mode": cfg.threshold_mode,
        "threshold_init": cfg.threshold_init,
        "pop_size": cfg.pop_size,
        "hidden": list(cfg.hidden),
        "timesteps": cfg.timesteps,
        "current_decay": cfg.current_decay,
        "voltage_decay": cfg.voltage_decay,
    })


def load_actor(path, dtype=np.float64) -> SpikingActor:
    from .checkpoint import load_checkpoint

    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "spiking-actor":
        raise ValueError(f"{path} is not a spiking-actor checkpoint")
    cfg = ActorConfig(
        multimodal=meta["multimodal"],
        threshold_mode=meta["threshold_mode"],
        threshold_init=meta["threshold_init"],
        pop_size=meta["pop_size"],
        hidden=tuple(meta["hidden"]),
        timesteps=meta["timesteps"],
        current_decay=meta["current_decay"],
        voltage_decay=meta["voltage_decay"],
    )
    actor = SpikingActor(cfg, np.random.default_rng(0), dtype=dtype)
    actor.load_params(tensors)
    return actor
