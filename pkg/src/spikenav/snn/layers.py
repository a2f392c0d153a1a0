"""Dense and convolutional spiking layers with backprop-through-time.

Forward passes record a per-timestep trace (inputs, membrane potentials,
spikes); ``backward`` replays the trace in reverse, routing temporal credit
through both the current-decay path and the voltage-decay path, with the
spike nonlinearity replaced by the rectangular surrogate.  Backprop here is
specialized to these two layer types; there is no general autodiff.
"""

from __future__ import annotations

import numpy as np

from .. import convops
from .lif import LayerState, LifConfig, ThresholdSpec, spike_fn, surrogate_grad


class LayerTrace:
    """Per-timestep snapshots needed by the backward pass of one layer.

    Spike and input arrays may be stored in a compact integer dtype; voltages
    keep the layer dtype.  Replaying the stored inputs forward from the start
    state reproduces the recorded outputs exactly.
    """

    def __init__(self, threshold: float, halfwidth: float):
        self.inputs: list[np.ndarray] = []
        self.voltages: list[np.ndarray] = []
        self.spikes: list[np.ndarray] = []
        self.threshold = threshold          # effective threshold at forward time
        self.halfwidth = halfwidth

    def __len__(self) -> int:
        return len(self.inputs)

    def record(self, x, v, s, compact: bool = False) -> None:
        self.inputs.append(x)
        self.voltages.append(v)
        self.spikes.append(s.astype(np.uint8) if compact else s)


def _init_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class _TemporalBackward:
    """Reverse-time LIF credit assignment, one call per timestep (T-1 .. 0).

    Gradient into the spike at t combines the layer's upstream with the reset
    path (v_{t+1} = d_v * v_t * (1 - s_t) + c_{t+1}); gradient into v_t adds
    the surrogate-windowed spike term, the direct voltage-decay path, and any
    external voltage gradient (used when a readout taps V directly).
    """

    def __init__(self, lif: LifConfig, threshold: float, halfwidth: float, dtype):
        self.d_c = lif.current_decay
        self.d_v = lif.voltage_decay
        self.theta = threshold
        self.hw = halfwidth
        self.dtype = dtype
        self.dv_next: np.ndarray | None = None
        self.dc_next: np.ndarray | None = None
        self.dtheta = 0.0

    def step(self, v: np.ndarray, s: np.ndarray, up_s, up_v=None) -> np.ndarray:
        """Returns dL/dc_t given stored v_t, s_t and this step's upstreams."""
        s = s.astype(self.dtype, copy=False)
        ghat = np.zeros_like(v) if up_s is None else up_s
        if self.dv_next is not None:
            ghat = ghat - self.d_v * v * self.dv_next
        window = surrogate_grad(v, self.theta, self.hw)
        dv = ghat * window
        if self.dv_next is not None:
            dv = dv + self.d_v * (1.0 - s) * self.dv_next
        if up_v is not None:
            dv = dv + up_v
        dc = dv if self.dc_next is None else dv + self.d_c * self.dc_next
        self.dtheta -= float(np.sum(ghat * window))
        self.dv_next, self.dc_next = dv, dc
        return dc


class _SpikingLayerBase:
    """Parameter/threshold handling shared by dense and conv layers."""

    def __init__(self, lif: LifConfig, dtype):
        self.lif = lif
        self.dtype = np.dtype(dtype)
        if lif.threshold.learnable:
            self.r = np.array(lif.threshold.r, dtype=np.float64)
        else:
            self.r = None

    @property
    def threshold(self) -> float:
        if self.r is not None:
            return float(np.tanh(self.r))
        return self.lif.threshold.value

    def freeze_threshold(self) -> None:
        """Convert a learnable threshold into a fixed one at its current value."""
        if self.r is not None:
            self.lif.threshold = ThresholdSpec.fixed(self.threshold)
            self.r = None

    def zero_state(self, lead_shape) -> LayerState:
        return LayerState.zeros(tuple(lead_shape) + self.state_shape, dtype=self.dtype)

    def _advance(self, state: LayerState, presyn: np.ndarray):
        c = self.lif.current_decay * state.current + presyn
        v = self.lif.voltage_decay * state.voltage * (1.0 - state.spikes) + c
        s = spike_fn(v, self.threshold)
        return LayerState(c, v, s), s

    def _threshold_grads(self, grads: dict, dtheta: float) -> dict:
        if self.r is not None:
            h = float(np.tanh(self.r))
            grads["r"] = np.array(dtheta * (1.0 - h * h), dtype=np.float64)
        return grads

    def params(self) -> dict:
        p = {"weight": self.weight, "bias": self.bias}
        if self.r is not None:
            p["r"] = self.r
        return p


class SpikingDense(_SpikingLayerBase):
    """Fully connected spiking layer; all neurons share one threshold."""

    def __init__(self, in_size: int, out_size: int, lif: LifConfig,
                 rng: np.random.Generator, dtype=np.float64):
        super().__init__(lif, dtype)
        self.in_size = in_size
        self.out_size = out_size
        self.weight = _init_uniform(rng, (out_size, in_size), in_size, self.dtype)
        self.bias = np.zeros(out_size, dtype=self.dtype)

    @property
    def state_shape(self):
        return (self.out_size,)

    def step(self, state: LayerState, x: np.ndarray):
        """One LIF timestep.  x has shape (..., in_size); spikes (..., out_size)."""
        x = np.asarray(x)
        if x.shape[-1] != self.in_size:
            raise ValueError(f"input size {x.shape[-1]} != layer input size {self.in_size}")
        if state.voltage.shape != x.shape[:-1] + (self.out_size,):
            raise ValueError(
                f"state shape {state.voltage.shape} does not match "
                f"input lead {x.shape[:-1]} x out size {self.out_size}"
            )
        presyn = x.astype(self.dtype, copy=False) @ self.weight.T + self.bias
        return self._advance(state, presyn)

    def forward_trace(self, state: LayerState, xs):
        """Run T timesteps recording a trace; returns (state, spikes list, trace)."""
        trace = LayerTrace(self.threshold, self.lif.surrogate_halfwidth)
        outs = []
        for x in xs:
            state, s = self.step(state, x)
            trace.record(x, state.voltage, s)
            outs.append(s)
        return state, outs, trace

    def backward(self, trace: LayerTrace, upstream_s, upstream_v=None, need_dx: bool = True):
        """BPTT over the trace.  Returns (grads dict, per-timestep input grads)."""
        T = len(trace)
        if len(upstream_s) != T:
            raise ValueError(f"trace has {T} timesteps but got {len(upstream_s)} upstream grads")
        rec = _TemporalBackward(self.lif, trace.threshold, trace.halfwidth, self.dtype)
        dW = np.zeros_like(self.weight)
        db = np.zeros_like(self.bias)
        dxs = [None] * T if need_dx else None
        for t in range(T - 1, -1, -1):
            dc = rec.step(trace.voltages[t], trace.spikes[t], upstream_s[t],
                          None if upstream_v is None else upstream_v[t])
            x = trace.inputs[t].astype(self.dtype, copy=False)
            flat_dc = dc.reshape(-1, self.out_size)
            dW += flat_dc.T @ x.reshape(-1, self.in_size)
            db += flat_dc.sum(axis=0)
            if need_dx:
                dxs[t] = dc @ self.weight
        return self._threshold_grads({"weight": dW, "bias": db}, rec.dtheta), dxs


class SpikingConv(_SpikingLayerBase):
    """Strided spiking convolution over (B, C, H, W) spike frames."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, pad: int, stride: int,
                 in_hw: tuple[int, int], lif: LifConfig, rng: np.random.Generator,
                 dtype=np.float64):
        super().__init__(lif, dtype)
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.pad, self.stride = kernel, pad, stride
        self.in_hw = tuple(in_hw)
        self.out_hw = (
            convops.conv_out_size(in_hw[0], kernel, pad, stride),
            convops.conv_out_size(in_hw[1], kernel, pad, stride),
        )
        fan_in = in_ch * kernel * kernel
        self.weight = _init_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in, self.dtype)
        self.bias = np.zeros(out_ch, dtype=self.dtype)

    @property
    def state_shape(self):
        return (self.out_ch,) + self.out_hw

    def step(self, state: LayerState, x: np.ndarray):
        x = np.asarray(x)
        if x.shape[1:] != (self.in_ch,) + self.in_hw:
            raise ValueError(f"input shape {x.shape[1:]} != {(self.in_ch,) + self.in_hw}")
        presyn = convops.conv2d(
            x.astype(self.dtype, copy=False), self.weight, None, self.pad, self.stride
        ) + self.bias[None, :, None, None]
        return self._advance(state, presyn)

    def forward_trace(self, state: LayerState, xs, compact: bool = True):
        trace = LayerTrace(self.threshold, self.lif.surrogate_halfwidth)
        outs = []
        for x in xs:
            state, s = self.step(state, x)
            trace.record(x, state.voltage, s, compact=compact)
            outs.append(trace.spikes[-1])
        return state, outs, trace

    def backward(self, trace: LayerTrace, upstream_s, upstream_v=None, need_dx: bool = True):
        T = len(trace)
        if len(upstream_s) != T:
            raise ValueError(f"trace has {T} timesteps but got {len(upstream_s)} upstream grads")
        rec = _TemporalBackward(self.lif, trace.threshold, trace.halfwidth, self.dtype)
        dW = np.zeros_like(self.weight)
        db = np.zeros_like(self.bias)
        dxs = [None] * T if need_dx else None
        for t in range(T - 1, -1, -1):
            dc = rec.step(trace.voltages[t], trace.spikes[t], upstream_s[t],
                          None if upstream_v is None else upstream_v[t])
            x = trace.inputs[t].astype(self.dtype, copy=False)
            dx, dw_t, db_t = convops.conv2d_backward(
                x, self.weight, dc, self.pad, self.stride, need_dx=need_dx
            )
            dW += dw_t
            db += db_t
            if need_dx:
                dxs[t] = dx
        return self._threshold_grads({"weight": dW, "bias": db}, rec.dtheta), dxs
