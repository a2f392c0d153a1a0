"""Hybrid VAE over event frames: spiking conv encoder, dense deconv decoder.

The encoder advances one LIF timestep per incoming frame and carries its
state across a whole episode; the 64-dim latent is read from the membrane
potential of the last conv layer.  The decoder is a plain ReLU/sigmoid
transposed-conv stack and never runs during deployment, where ``dvs_state``
returns the latent mean directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import convops
from .optim import Adam
from .snn import LayerState, LifConfig, SpikingConv, ThresholdSpec

log = logging.getLogger(__name__)

LATENT_DIM = 64
FRAME_HW = (128, 128)

# (in_ch, out_ch, in_hw) per encoder stage; kernel 4, pad 1, stride 2 halves
# the resolution each stage: 128 -> 64 -> 32 -> 16 -> 8
ENCODER_STAGES = [(1, 16, 128), (16, 32, 64), (32, 16, 32), (16, 1, 16)]
DECODER_STAGES = [(1, 16, 8), (16, 32, 16), (32, 16, 32), (16, 1, 64)]


@dataclass
class LatentStats:
    """Latent Gaussian, parameterized internally as (mean, log-variance)."""

    mu: np.ndarray
    logvar: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.logvar)


def _dense_init(rng, shape, fan_in, dtype):
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class EventVae:
    """Encoder + latent heads + decoder with hand-written gradients."""

    def __init__(self, rng: np.random.Generator, dtype=np.float32,
                 encoder_kind: str = "spiking"):
        if encoder_kind not in ("spiking", "dense"):
            raise ValueError(f"unknown encoder_kind {encoder_kind!r}")
        self.dtype = np.dtype(dtype)
        self.encoder_kind = encoder_kind
        self.trained = False
        self.decoder_ops = 0  # decode() invocations, for deployment assertions

        lif = LifConfig(threshold=ThresholdSpec.fixed(0.5))
        self.encoder = [
            SpikingConv(cin, cout, kernel=4, pad=1, stride=2, in_hw=(hw, hw),
                        lif=LifConfig(lif.current_decay, lif.voltage_decay,
                                      lif.surrogate_halfwidth, ThresholdSpec.fixed(0.5)),
                        rng=rng, dtype=dtype)
            for cin, cout, hw in ENCODER_STAGES
        ]
        self.mu_w = _dense_init(rng, (LATENT_DIM, LATENT_DIM), LATENT_DIM, dtype)
        self.mu_b = np.zeros(LATENT_DIM, dtype=dtype)
        self.lv_w = _dense_init(rng, (LATENT_DIM, LATENT_DIM), LATENT_DIM, dtype)
        self.lv_b = np.zeros(LATENT_DIM, dtype=dtype)
        self.dec_w = []
        self.dec_b = []
        for cin, cout, _ in DECODER_STAGES:
            self.dec_w.append(_dense_init(rng, (cin, cout, 4, 4), cin * 16, dtype))
            self.dec_b.append(np.zeros(cout, dtype=dtype))

    # -- parameters ---------------------------------------------------------

    def params(self) -> dict:
        p = {}
        for i, layer in enumerate(self.encoder):
            p[f"enc{i}.weight"] = layer.weight
            p[f"enc{i}.bias"] = layer.bias
        p["mu.weight"], p["mu.bias"] = self.mu_w, self.mu_b
        p["lv.weight"], p["lv.bias"] = self.lv_w, self.lv_b
        for i in range(len(self.dec_w)):
            p[f"dec{i}.weight"] = self.dec_w[i]
            p[f"dec{i}.bias"] = self.dec_b[i]
        return p

    def load_params(self, tensors: dict) -> None:
        own = self.params()
        for name, arr in tensors.items():
            if name not in own:
                raise KeyError(f"unknown parameter {name!r} in checkpoint")
            if own[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {own[name].shape} vs {arr.shape}")
            own[name][...] = arr.astype(own[name].dtype)

    # -- encoding -----------------------------------------------------------

    def new_episode_state(self, batch: int = 1) -> list[LayerState]:
        return [layer.zero_state((batch,)) for layer in self.encoder]

    def _check_frame(self, frame: np.ndarray) -> np.ndarray:
        frame = np.asarray(frame)
        if frame.ndim == 2:
            frame = frame[None, None]
        elif frame.ndim == 3:
            frame = frame[:, None]
        if frame.shape[-2:] != FRAME_HW:
            raise ValueError(f"frame shape {frame.shape[-2:]} != {FRAME_HW}")
        return frame

    def encode_step(self, frame: np.ndarray, states: list[LayerState]):
        """Advance the encoder one timestep; returns (LatentStats, new states).

        Latent heads read the final conv layer's membrane potential.
        """
        x = self._check_frame(frame)
        if self.encoder_kind == "dense":
            h = x.astype(self.dtype, copy=False)
            for layer in self.encoder:
                h = np.maximum(convops.conv2d(h, layer.weight, None, 1, 2)
                               + layer.bias[None, :, None, None], 0.0)
            flat = h.reshape(h.shape[0], -1)
        else:
            new_states = []
            h = x
            for layer, st in zip(self.encoder, states):
                st, h = layer.step(st, h)
                new_states.append(st)
            states = new_states
            flat = new_states[-1].voltage.reshape(x.shape[0], -1)
        mu = flat @ self.mu_w.T + self.mu_b
        logvar = flat @ self.lv_w.T + self.lv_b
        return LatentStats(mu, logvar), states

    def encode(self, frames, states: list[LayerState]):
        """Feed temporally ordered frames; stats come from the last frame."""
        stats = None
        for frame in frames:
            stats, states = self.encode_step(frame, states)
        if stats is None:
            raise ValueError("encode needs at least one frame")
        return stats, states

    def dvs_state(self, deque, states: list[LayerState]):
        """Deployment path: (64,) latent mean from the 5-frame deque.

        Carries encoder state across calls; the decoder is never touched.
        """
        if not self.trained:
            log.warning("dvs_state called on an untrained VAE encoder")
        stacked = np.stack([np.asarray(f) for f in deque])[:, None, None]
        stats, states = self.encode(stacked, states)
        return stats.mu[0].astype(np.float64), states

    # -- latent and decoder -------------------------------------------------

    def reparameterize(self, stats: LatentStats, rng: np.random.Generator) -> np.ndarray:
        """Draw z = mu + sigma * eps with eps ~ N(0, I)."""
        eps = rng.standard_normal(stats.mu.shape).astype(stats.mu.dtype)
        return stats.mu + stats.sigma * eps

    def decode(self, z: np.ndarray, want_cache: bool = False):
        """z (B, 64) -> reconstruction (B, 1, 128, 128) in [0, 1]."""
        self.decoder_ops += 1
        z = np.asarray(z, dtype=self.dtype)
        if z.ndim == 1:
            z = z[None]
        if z.shape[-1] != LATENT_DIM:
            raise ValueError(f"latent size {z.shape[-1]} != {LATENT_DIM}")
        h = z.reshape(-1, 1, 8, 8)
        cache = []
        for i, (w, b) in enumerate(zip(self.dec_w, self.dec_b)):
            pre = convops.tconv2d(h, w, b, pad=1, stride=2)
            if i < len(self.dec_w) - 1:
                out = np.maximum(pre, 0.0)
            else:
                out = 1.0 / (1.0 + np.exp(-pre))
            if want_cache:
                cache.append((h, out))
            h = out
        return (h, cache) if want_cache else h

    def decode_backward(self, dout: np.ndarray, cache):
        """Backprop a gradient through decode; returns (dz, grads dict)."""
        grads = {}
        g = dout
        for i in range(len(self.dec_w) - 1, -1, -1):
            h_in, out = cache[i]
            if i == len(self.dec_w) - 1:
                dpre = g * out * (1.0 - out)
            else:
                dpre = g * (out > 0)
            dx, dw, db = convops.tconv2d_backward(h_in, self.dec_w[i], dpre, pad=1, stride=2)
            grads[f"dec{i}.weight"] = dw
            grads[f"dec{i}.bias"] = db
            g = dx
        return g.reshape(g.shape[0], -1), grads


def save_vae(path, vae: EventVae) -> None:
    from .checkpoint import save_checkpoint

    save_checkpoint(path, vae.params(), metadata={
        "kind": "event-vae",
        "encoder_kind": vae.encoder_kind,
        "trained": vae.trained,
    })


def load_vae(path, dtype=np.float32) -> EventVae:
    from .checkpoint import load_checkpoint

    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "event-vae":
        raise ValueError(f"{path} is not an event-vae checkpoint")
    vae = EventVae(np.random.default_rng(0), dtype=dtype,
                   encoder_kind=meta.get("encoder_kind", "spiking"))
    vae.load_params(tensors)
    vae.trained = bool(meta.get("trained", True))
    return vae


@dataclass
class VaeTrainConfig:
    epochs: int = 20
    lr: float = 1e-3
    batch_episodes: int = 8
    window: int = 50          # truncated-BPTT span; full chain for episodes <= window
    kl_weight: float = 1.0    # scales the KL term in the training objective
    seed: int = 0


def train_vae(vae: EventVae, episodes, cfg: VaeTrainConfig):
    """Unsupervised training over per-episode frame sequences.

    Encoder state zeroes at each episode start and carries across all of its
    frames; gradients flow through windows of ``cfg.window`` frames.  Episodes
    are batched in lockstep (shorter ones are zero-padded and masked out of
    the loss).  Returns the per-epoch loss curve.
    """
    if not episodes:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(vae.params(), lr=cfg.lr)
    order = sorted(range(len(episodes)), key=lambda i: len(episodes[i]))
    curve = []
    for epoch in range(cfg.epochs):
        groups = [order[i:i + cfg.batch_episodes]
                  for i in range(0, len(order), cfg.batch_episodes)]
        rng.shuffle(groups)
        tot = tot_mse = tot_kl = 0.0
        count = 0
        for group in groups:
            eps = [np.asarray(episodes[i], dtype=np.uint8) for i in group]
            n_max = max(len(e) for e in eps)
            b = len(eps)
            frames = np.zeros((b, n_max) + FRAME_HW, dtype=np.uint8)
            mask = np.zeros((b, n_max), dtype=bool)
            for k, e in enumerate(eps):
                frames[k, :len(e)] = e
                mask[k, :len(e)] = True
            states = vae.new_episode_state(batch=b)
            for start in range(0, n_max, cfg.window):
                stop = min(start + cfg.window, n_max)
                w_mask = mask[:, start:stop]
                if not w_mask.any():
                    break
                states, losses, grads = vae_window_backward(
                    vae, frames[:, start:stop], w_mask, states, rng, cfg.kl_weight)
                opt.step(grads)
                m = int(w_mask.sum())
                tot += losses[0] * m
                tot_mse += losses[1] * m
                tot_kl += losses[2] * m
                count += m
        curve.append({"epoch": epoch, "loss": tot / count,
                      "recon": tot_mse / count, "kl": tot_kl / count})
        log.info("vae epoch %d: loss=%.6f recon=%.6f kl=%.6f",
                 epoch, curve[-1]["loss"], curve[-1]["recon"], curve[-1]["kl"])
    vae.trained = True
    return curve


def vae_window_backward(vae, frames, mask, states, rng, kl_weight):
    """Loss and gradients over one window of frames (B, T, H, W).

    The training objective is the masked mean over (frame, batch) of the
    per-frame loss; gradients cover encoder, latent heads, and decoder.
    Returns (carried states, (loss, mse, kl) means, grads dict).
    """
    b, T = frames.shape[:2]
    n_px = FRAME_HW[0] * FRAME_HW[1]
    m_count = max(1, int(mask.sum()))
    xs = [frames[:, t][:, None] for t in range(T)]

    grads = {name: np.zeros_like(p, dtype=np.float64) for name, p in vae.params().items()}
    dvolts = []
    tot = tot_mse = tot_kl = 0.0

    if vae.encoder_kind == "dense":
        # stateless ablation path: plain backprop per frame
        for t in range(T):
            losses = _dense_frame_step(vae, xs[t], mask[:, t], grads, rng, kl_weight, m_count)
            tot, tot_mse, tot_kl = tot + losses[0], tot_mse + losses[1], tot_kl + losses[2]
        return states, (tot / m_count, tot_mse / m_count, tot_kl / m_count), grads

    traces = []
    seq = xs
    new_states = []
    for layer, st in zip(vae.encoder, states):
        st, seq, tr = layer.forward_trace(st, seq)
        new_states.append(st)
        traces.append(tr)
    states = new_states

    for t in range(T):
        volt = traces[-1].voltages[t]
        flat = volt.reshape(b, -1)
        m = mask[:, t].astype(np.float64)
        stats = LatentStats(flat @ vae.mu_w.T + vae.mu_b, flat @ vae.lv_w.T + vae.lv_b)
        eps = rng.standard_normal(stats.mu.shape).astype(stats.mu.dtype)
        z = stats.mu + stats.sigma * eps
        xhat, cache = vae.decode(z, want_cache=True)
        x = xs[t].astype(np.float64)

        diff = xhat - x
        mse_b = (diff * diff).sum(axis=(1, 2, 3)) / n_px
        mu64 = stats.mu.astype(np.float64)
        lv64 = stats.logvar.astype(np.float64)
        kl_b = 0.5 * (mu64 ** 2 + np.exp(lv64) - 1.0 - lv64).sum(axis=1)
        tot_mse += float(mse_b @ m)
        tot_kl += float(kl_b @ m)
        tot += float((mse_b + kl_weight * kl_b) @ m)

        scale = (m / m_count)[:, None]
        dxhat = (2.0 / n_px) * diff * scale[:, :, None, None]
        dz, dec_grads = vae.decode_backward(dxhat.astype(vae.dtype), cache)
        for k, g in dec_grads.items():
            grads[k] += g
        sigma = stats.sigma
        dmu = dz + kl_weight * mu64 * scale
        dlv = dz * eps * sigma * 0.5 + kl_weight * 0.5 * (np.exp(lv64) - 1.0) * scale
        grads["mu.weight"] += dmu.T @ flat
        grads["mu.bias"] += dmu.sum(axis=0)
        grads["lv.weight"] += dlv.T @ flat
        grads["lv.bias"] += dlv.sum(axis=0)
        dvolts.append((dmu @ vae.mu_w + dlv @ vae.lv_w)
                      .astype(vae.dtype).reshape(volt.shape))

    up_s = [None] * T
    g4, dx = vae.encoder[-1].backward(traces[-1], up_s, upstream_v=dvolts)
    layer_grads = {len(vae.encoder) - 1: g4}
    for i in range(len(vae.encoder) - 2, -1, -1):
        layer_grads[i], dx = vae.encoder[i].backward(traces[i], dx, need_dx=(i > 0))
    for i, g in layer_grads.items():
        grads[f"enc{i}.weight"] += g["weight"]
        grads[f"enc{i}.bias"] += g["bias"]

    return states, (tot / m_count, tot_mse / m_count, tot_kl / m_count), grads


def _dense_frame_step(vae, x, m, grads, rng, kl_weight, m_count):
    """Forward+backward for one frame through the dense-encoder ablation."""
    b = x.shape[0]
    n_px = FRAME_HW[0] * FRAME_HW[1]
    h = x.astype(vae.dtype)
    acts = [h]
    for layer in vae.encoder:
        h = np.maximum(convops.conv2d(h, layer.weight, None, 1, 2)
                       + layer.bias[None, :, None, None], 0.0)
        acts.append(h)
    flat = h.reshape(b, -1)
    stats = LatentStats(flat @ vae.mu_w.T + vae.mu_b, flat @ vae.lv_w.T + vae.lv_b)
    eps = rng.standard_normal(stats.mu.shape).astype(stats.mu.dtype)
    z = stats.mu + stats.sigma * eps
    xhat, cache = vae.decode(z, want_cache=True)
    x64 = x.astype(np.float64)
    diff = xhat - x64
    mf = m.astype(np.float64)
    mse_b = (diff * diff).sum(axis=(1, 2, 3)) / n_px
    mu64 = stats.mu.astype(np.float64)
    lv64 = stats.logvar.astype(np.float64)
    kl_b = 0.5 * (mu64 ** 2 + np.exp(lv64) - 1.0 - lv64).sum(axis=1)

    scale = (mf / m_count)[:, None]
    dxhat = (2.0 / n_px) * diff * scale[:, :, None, None]
    dz, dec_grads = vae.decode_backward(dxhat.astype(vae.dtype), cache)
    for k, g in dec_grads.items():
        grads[k] += g
    dmu = dz + kl_weight * mu64 * scale
    dlv = dz * eps * stats.sigma * 0.5 + kl_weight * 0.5 * (np.exp(lv64) - 1.0) * scale
    grads["mu.weight"] += dmu.T @ flat
    grads["mu.bias"] += dmu.sum(axis=0)
    grads["lv.weight"] += dlv.T @ flat
    grads["lv.bias"] += dlv.sum(axis=0)
    dflat = (dmu @ vae.mu_w + dlv @ vae.lv_w).astype(vae.dtype)
    g = dflat.reshape(acts[-1].shape)
    for i in range(len(vae.encoder) - 1, -1, -1):
        g = g * (acts[i + 1] > 0)
        dxl, dw, db = convops.conv2d_backward(acts[i], vae.encoder[i].weight, g, 1, 2,
                                              need_dx=(i > 0))
        grads[f"enc{i}.weight"] += dw
        grads[f"enc{i}.bias"] += db
        g = dxl
    return float((mse_b + kl_weight * kl_b) @ mf), float(mse_b @ mf), float(kl_b @ mf)


def _as_batched_frames(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[None, None]
    elif a.ndim == 3:
        a = a[:, None]
    return a


def vae_loss(x: np.ndarray, xhat: np.ndarray, stats: LatentStats):
    """Per-frame loss: pixel-mean squared error plus closed-form KL.

        L = (1/(w*h)) * sum (x - xhat)^2 + 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)

    Batched inputs are averaged over the batch.  Returns (total, mse, kl).
    """
    x = _as_batched_frames(x)
    xhat = _as_batched_frames(xhat)
    if x.shape != xhat.shape:
        raise ValueError(f"frame shape {x.shape} vs reconstruction {xhat.shape}")
    b = x.shape[0]
    n_px = x.shape[-1] * x.shape[-2]
    diff = x - xhat
    mse = float(np.sum(diff * diff)) / n_px / b
    mu = np.atleast_2d(np.asarray(stats.mu, dtype=np.float64))
    lv = np.atleast_2d(np.asarray(stats.logvar, dtype=np.float64))
    kl = 0.5 * float(np.sum(mu * mu + np.exp(lv) - 1.0 - lv)) / mu.shape[0]
    return mse + kl, mse, kl
