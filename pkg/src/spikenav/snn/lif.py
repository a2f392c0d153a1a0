"""Two-state leaky integrate-and-fire dynamics.

Each neuron carries a synaptic current ``c`` and a membrane potential ``v``.
One timestep updates, given presynaptic drive ``p = W @ s_in + b``:

    c_t = d_c * c_{t-1} + p
    v_t = d_v * v_{t-1} * (1 - s_{t-1}) + c_t
    s_t = 1  if v_t >= threshold  else 0

The ``(1 - s_{t-1})`` factor implements reset: a neuron that fired carries no
voltage into the next step.  Spiking is non-differentiable; training uses a
rectangular surrogate window around the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_CURRENT_DECAY = 0.5
DEFAULT_VOLTAGE_DECAY = 0.75
DEFAULT_SURROGATE_HALFWIDTH = 0.5
DEFAULT_THRESHOLD = 0.5


@dataclass
class ThresholdSpec:
    """Firing threshold, either a fixed value or tanh(r) with learnable r.

    The tanh parameterization keeps the effective threshold in (-1, 1) for
    every finite r, no matter how r is updated.
    """

    learnable: bool = False
    value: float = DEFAULT_THRESHOLD  # used when not learnable
    r: float = 0.0                    # used when learnable

    @classmethod
    def fixed(cls, value: float = DEFAULT_THRESHOLD) -> "ThresholdSpec":
        return cls(learnable=False, value=float(value))

    @classmethod
    def learnable_init(cls, threshold: float = DEFAULT_THRESHOLD) -> "ThresholdSpec":
        if not -1.0 < threshold < 1.0:
            raise ValueError(f"learnable threshold init must lie in (-1, 1), got {threshold}")
        return cls(learnable=True, r=float(np.arctanh(threshold)))

    def effective(self) -> float:
        return threshold_value(self.r) if self.learnable else self.value


@dataclass
class LifConfig:
    """Neuron constants shared by all neurons of a layer."""

    current_decay: float = DEFAULT_CURRENT_DECAY
    voltage_decay: float = DEFAULT_VOLTAGE_DECAY
    surrogate_halfwidth: float = DEFAULT_SURROGATE_HALFWIDTH
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)

    def __post_init__(self) -> None:
        if not 0.0 <= self.current_decay <= 1.0:
            raise ValueError(f"current_decay must be in [0, 1], got {self.current_decay}")
        if not 0.0 <= self.voltage_decay <= 1.0:
            raise ValueError(f"voltage_decay must be in [0, 1], got {self.voltage_decay}")
        if self.surrogate_halfwidth <= 0.0:
            raise ValueError(f"surrogate_halfwidth must be > 0, got {self.surrogate_halfwidth}")


@dataclass
class LayerState:
    """Per-layer spiking state carried across timesteps and control steps."""

    current: np.ndarray
    voltage: np.ndarray
    spikes: np.ndarray

    def copy(self) -> "LayerState":
        return LayerState(self.current.copy(), self.voltage.copy(), self.spikes.copy())

    @classmethod
    def zeros(cls, shape, dtype=np.float64) -> "LayerState":
        return cls(
            np.zeros(shape, dtype=dtype),
            np.zeros(shape, dtype=dtype),
            np.zeros(shape, dtype=dtype),
        )


def spike_fn(v: np.ndarray, threshold: float) -> np.ndarray:
    """Heaviside firing: 1 where v >= threshold (fires at equality)."""
    v = np.asarray(v)
    return (v >= threshold).astype(v.dtype if v.dtype.kind == "f" else np.float64)


def surrogate_grad(v: np.ndarray, v_th: float, halfwidth: float = DEFAULT_SURROGATE_HALFWIDTH) -> np.ndarray:
    """Rectangular pseudo-gradient of the spike: 1 where |v - v_th| < halfwidth."""
    v = np.asarray(v)
    return (np.abs(v - v_th) < halfwidth).astype(v.dtype if v.dtype.kind == "f" else np.float64)


def threshold_value(r: float) -> float:
    """Effective threshold tanh(r), strictly inside (-1, 1) for finite r."""
    return float(np.tanh(r))


def threshold_grad(upstream, voltages, r: float, halfwidth: float = DEFAULT_SURROGATE_HALFWIDTH) -> float:
    """Gradient of a loss w.r.t. the shared threshold parameter r of one layer.

    ``upstream`` and ``voltages`` are per-timestep sequences of dL/ds and
    membrane potentials.  Since s = step(v - tanh(r)),

        dL/dr = - sum_t dL/ds_t * rect(v_t - tanh(r)) * (1 - tanh(r)^2)

    with rect the rectangular surrogate window.
    """
    if len(upstream) != len(voltages):
        raise ValueError(
            f"upstream/trace length mismatch: {len(upstream)} grads vs {len(voltages)} timesteps"
        )
    h = threshold_value(r)
    total = 0.0
    for g, v in zip(upstream, voltages):
        g = np.asarray(g, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if g.shape != v.shape:
            raise ValueError(f"upstream shape {g.shape} does not match voltage shape {v.shape}")
        total += float(np.sum(g * surrogate_grad(v, h, halfwidth)))
    return -total * (1.0 - h * h)
