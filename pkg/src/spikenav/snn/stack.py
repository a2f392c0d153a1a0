"""Sequential composition of spiking layers and episode state handling.

States are plain values: a fresh episode starts from all-zero C/V/S, and
within an episode the state returned by one control step is passed to the
next (no reset between inference calls).
"""

from __future__ import annotations

import numpy as np

from .lif import LayerState


class SpikingStack:
    """A feedforward chain of spiking layers sharing one timestep clock."""

    def __init__(self, layers):
        self.layers = list(layers)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def new_episode_state(self, lead_shape=()) -> list[LayerState]:
        """All-zero C, V, S for every layer, used at episode start."""
        return [layer.zero_state(lead_shape) for layer in self.layers]

    def forward_trace(self, states: list[LayerState], xs):
        """Feed T input frames through the chain (same-timestep propagation).

        Returns (new states, output spike list, traces per layer).
        """
        traces = []
        new_states = []
        seq = list(xs)
        for layer, state in zip(self.layers, states):
            state, seq, trace = layer.forward_trace(state, seq)
            new_states.append(state)
            traces.append(trace)
        return new_states, seq, traces

    def backward(self, traces, upstream_s, need_dx: bool = False):
        """BPTT through the chain; returns (per-layer grads, input grads or None)."""
        grads = [None] * len(self.layers)
        up = upstream_s
        for i in range(len(self.layers) - 1, -1, -1):
            want_dx = need_dx or i > 0
            grads[i], up = self.layers[i].backward(traces[i], up, need_dx=want_dx)
        return grads, (up if need_dx else None)

    def params(self) -> list[dict]:
        return [layer.params() for layer in self.layers]


def new_episode_state(network, lead_shape=()) -> list[LayerState]:
    """Zeroed per-layer state at episode start."""
    if hasattr(network, "new_episode_state"):
        return network.new_episode_state(lead_shape)
    return [layer.zero_state(lead_shape) for layer in network]


def carry_state(prev: list[LayerState]) -> list[LayerState]:
    """Preserve state across control steps within an episode (no reset)."""
    return [LayerState(s.current, s.voltage, s.spikes) for s in prev]


def flatten_params(param_dicts: list[dict], prefix: str = "layer") -> dict:
    flat = {}
    for i, d in enumerate(param_dicts):
        for k, v in d.items():
            flat[f"{prefix}{i}.{k}"] = v
    return flat


def param_hash(params) -> str:
    """Order-independent-safe digest of named parameter arrays (frozen checks)."""
    import hashlib

    if isinstance(params, dict):
        items = sorted(params.items())
    else:
        items = sorted(flatten_params(params).items())
    h = hashlib.sha256()
    for name, arr in items:
        h.update(name.encode())
        arr = np.ascontiguousarray(arr)
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()
