"""Event-stream handling and population/Poisson spike encoding.

Events are (t, x, y, p) records with microsecond timestamps and polarity in
{-1, +1}.  A rolling window of binary event frames feeds the VAE encoder;
continuous observations are turned into spike trains by Gaussian-receptive-
field populations (J neurons per state dimension) sampled per timestep.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1")])
EVENT_FILE_MAGIC = b"SNAVEVS1"

FRAME_SIZE = 128          # DVS128-style sensor
DEQUE_LEN = 5             # frames fed to the encoder per control step
POPULATION_SIZE = 10      # neurons per state dimension
SIGMA_MIN = 1e-3


def make_events(t, x, y, p) -> np.ndarray:
    """Build a structured event array from column data."""
    ev = np.empty(len(np.atleast_1d(t)), dtype=EVENT_DTYPE)
    ev["t"], ev["x"], ev["y"], ev["p"] = t, x, y, p
    return ev


def events_to_frame(events: np.ndarray, window, width: int = FRAME_SIZE,
                    height: int = FRAME_SIZE) -> np.ndarray:
    """Collapse the events inside [t0, t1] into a binary (H, W) frame.

    Any event touching a pixel sets it to 1 (|p|), regardless of polarity or
    multiplicity.  Out-of-bounds coordinates are an error.
    """
    frame = np.zeros((height, width), dtype=np.uint8)
    if len(events) == 0:
        return frame
    t0, t1 = window
    sel = events[(events["t"] >= t0) & (events["t"] <= t1)]
    if len(sel) == 0:
        return frame
    xs = sel["x"].astype(np.intp)
    ys = sel["y"].astype(np.intp)
    if xs.size and (xs.max() >= width or ys.max() >= height):
        bad = sel[(xs >= width) | (ys >= height)][0]
        raise ValueError(
            f"event at ({int(bad['x'])}, {int(bad['y'])}) outside {width}x{height} frame"
        )
    frame[ys, xs] = 1
    return frame


def fresh_deque(width: int = FRAME_SIZE, height: int = FRAME_SIZE,
                length: int = DEQUE_LEN) -> tuple:
    """Warm-up deque: ``length`` all-zero frames, oldest first."""
    return tuple(np.zeros((height, width), dtype=np.uint8) for _ in range(length))


def push_frame(deque: tuple, frame: np.ndarray) -> tuple:
    """Evict the oldest frame and append the new one (pure function)."""
    return deque[1:] + (np.asarray(frame, dtype=np.uint8),)


# ---------------------------------------------------------------------------
# Event files: binary stream and CSV import
# ---------------------------------------------------------------------------

def write_event_file(path, events: np.ndarray) -> None:
    # EVENT_DTYPE is packed little-endian, so records are the 13-byte wire
    # format (t: u64 us, x: u16, y: u16, p: i8) directly
    events = np.asarray(events, dtype=EVENT_DTYPE)
    with open(path, "wb") as f:
        f.write(EVENT_FILE_MAGIC)
        f.write(events.tobytes())


def read_event_file(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != EVENT_FILE_MAGIC:
        raise ValueError(f"{path} is not an event file (bad magic)")
    body = data[8:]
    if len(body) % EVENT_DTYPE.itemsize:
        raise ValueError(f"{path} has a truncated event record")
    return np.frombuffer(body, dtype=EVENT_DTYPE).copy()


def read_event_csv(path) -> np.ndarray:
    """CSV import with t,x,y,p columns (header row optional)."""
    rows = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            try:
                rows.append((int(float(row[0])), int(row[1]), int(row[2]), int(row[3])))
            except ValueError:
                continue  # header line
    ev = np.empty(len(rows), dtype=EVENT_DTYPE)
    for i, r in enumerate(rows):
        ev[i] = r
    return ev


# ---------------------------------------------------------------------------
# Population coding
# ---------------------------------------------------------------------------

class PopulationParams:
    """Learnable Gaussian receptive fields: one J-neuron population per state dim."""

    def __init__(self, n_states: int, pop_size: int = POPULATION_SIZE, dtype=np.float64):
        self.n_states = n_states
        self.pop_size = pop_size
        centers = np.linspace(0.0, 1.0, pop_size)
        self.means = np.tile(centers, (n_states, 1)).astype(dtype)
        self.stds = np.full((n_states, pop_size), 1.0 / (pop_size - 1), dtype=dtype)

    @property
    def n_neurons(self) -> int:
        return self.n_states * self.pop_size

    def params(self) -> dict:
        return {"means": self.means, "stds": self.stds}

    def clamp_stds(self) -> None:
        low = self.stds < SIGMA_MIN
        if np.any(low):
            log.warning("clamping %d population stds below %.0e", int(low.sum()), SIGMA_MIN)
            np.clip(self.stds, SIGMA_MIN, None, out=self.stds)


def population_activate(state: np.ndarray, params: PopulationParams) -> np.ndarray:
    """Stimulation strengths A in (0, 1]: A_ij = exp(-((s_i - mu_ij)/sigma_ij)^2 / 2).

    ``state`` has shape (..., N) with entries pre-normalized to [0, 1]; the
    result is flattened to (..., N*J) in (state, neuron) order.
    """
    state = np.asarray(state)
    if state.shape[-1] != params.n_states:
        raise ValueError(f"state has {state.shape[-1]} dims, expected {params.n_states}")
    params.clamp_stds()
    z = (state[..., :, None] - params.means) / params.stds
    a = np.exp(-0.5 * z * z)
    return a.reshape(state.shape[:-1] + (params.n_neurons,))


def poisson_sample(strengths: np.ndarray, timesteps: int, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(A) spike per neuron per timestep: (T, ...) binary train."""
    shape = (timesteps,) + strengths.shape
    return (rng.random(shape) < strengths).astype(strengths.dtype)


def population_grad(upstream: np.ndarray, strengths: np.ndarray, state: np.ndarray,
                    params: PopulationParams):
    """Gradients through the stochastic encoder.

    The Bernoulli draw is handled with a straight-through estimator
    (d spike / d A := 1 per timestep), then the chain rule through the
    Gaussian gives analytic gradients.  ``upstream`` is dL/dspikes, either
    (T, ..., N*J) per timestep or (..., N*J) already summed over time.

    Returns (dmeans, dstds, dstate).
    """
    upstream = np.asarray(upstream)
    if upstream.ndim == strengths.ndim + 1:
        upstream = upstream.sum(axis=0)
    if upstream.shape != strengths.shape:
        raise ValueError(f"upstream shape {upstream.shape} != strengths {strengths.shape}")
    n, j = params.n_states, params.pop_size
    da = (upstream * strengths).reshape(upstream.shape[:-1] + (n, j))
    z_over_sigma = (np.asarray(state)[..., :, None] - params.means) / (params.stds ** 2)
    dmu = da * z_over_sigma                      # dA/dmu = A (s-mu)/sigma^2
    dsig = da * z_over_sigma ** 2 * params.stds  # dA/dsigma = A (s-mu)^2/sigma^3
    dstate = -dmu.sum(axis=-1)
    lead_axes = tuple(range(upstream.ndim - 1))
    return dmu.sum(axis=lead_axes), dsig.sum(axis=lead_axes), dstate
