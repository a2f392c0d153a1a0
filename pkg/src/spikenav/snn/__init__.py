"""Spiking-network core: LIF dynamics, layers, and backprop-through-time."""

from .lif import (
    DEFAULT_CURRENT_DECAY,
    DEFAULT_SURROGATE_HALFWIDTH,
    DEFAULT_THRESHOLD,
    DEFAULT_VOLTAGE_DECAY,
    LayerState,
    LifConfig,
    ThresholdSpec,
    spike_fn,
    surrogate_grad,
    threshold_grad,
    threshold_value,
)
from .layers import LayerTrace, SpikingConv, SpikingDense
from .stack import SpikingStack, carry_state, new_episode_state, param_hash

__all__ = [
    "DEFAULT_CURRENT_DECAY",
    "DEFAULT_SURROGATE_HALFWIDTH",
    "DEFAULT_THRESHOLD",
    "DEFAULT_VOLTAGE_DECAY",
    "LayerState",
    "LayerTrace",
    "LifConfig",
    "SpikingConv",
    "SpikingDense",
    "SpikingStack",
    "ThresholdSpec",
    "carry_state",
    "new_episode_state",
    "param_hash",
    "spike_fn",
    "surrogate_grad",
    "threshold_grad",
    "threshold_value",
]
