"""Event-frame datasets: on-disk episode archives and synthetic generators.

Disk layout of a dataset directory:

    manifest.json          episode list, frame counts, geometry, seed
    episode_0000.rle       one archive per episode

Each ``.rle`` file holds binary frames as run lengths: a 16-byte header
(magic b"SNRL", u16 n_frames, u16 height, u16 width, 6 pad bytes), then per
frame a u32 run count followed by that many u32 run lengths.  Runs alternate
0/1 starting with 0 over the row-major flattened frame.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

RLE_MAGIC = b"SNRL"


def _rle_encode(frame: np.ndarray) -> np.ndarray:
    flat = np.asarray(frame, dtype=np.uint8).ravel()
    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).astype(np.uint32)
    if flat[0] == 1:  # runs start with a zero-run by convention
        runs = np.concatenate(([np.uint32(0)], runs))
    return runs.astype("<u4")


def _rle_decode(runs: np.ndarray, shape) -> np.ndarray:
    vals = np.zeros(len(runs), dtype=np.uint8)
    vals[1::2] = 1
    return np.repeat(vals, runs).reshape(shape)


def write_episode_rle(path, frames: np.ndarray) -> None:
    frames = np.asarray(frames, dtype=np.uint8)
    n, h, w = frames.shape
    with open(path, "wb") as f:
        f.write(RLE_MAGIC)
        f.write(struct.pack("<HHH", n, h, w))
        f.write(b"\x00" * 6)
        for frame in frames:
            runs = _rle_encode(frame)
            f.write(struct.pack("<I", len(runs)))
            f.write(runs.tobytes())


def read_episode_rle(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != RLE_MAGIC:
        raise ValueError(f"{path} is not an RLE episode archive")
    n, h, w = struct.unpack_from("<HHH", data, 4)
    off = 16
    frames = np.empty((n, h, w), dtype=np.uint8)
    for i in range(n):
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        runs = np.frombuffer(data, dtype="<u4", count=count, offset=off)
        off += 4 * count
        frames[i] = _rle_decode(runs, (h, w))
    return frames


class EpisodeEventDataset:
    """Ordered event-frame sequences grouped by episode."""

    def __init__(self, episodes: list[np.ndarray], meta: dict | None = None):
        self.episodes = [np.asarray(e, dtype=np.uint8) for e in episodes]
        self.meta = meta or {}

    def __len__(self) -> int:
        return len(self.episodes)

    @property
    def n_frames(self) -> int:
        return sum(len(e) for e in self.episodes)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, frames in enumerate(self.episodes):
            name = f"episode_{i:04d}.rle"
            write_episode_rle(directory / name, frames)
            entries.append({"file": name, "frames": len(frames)})
        manifest = dict(self.meta)
        manifest.update({
            "episodes": entries,
            "n_episodes": len(self.episodes),
            "n_frames": self.n_frames,
            "frame_shape": list(self.episodes[0].shape[1:]) if self.episodes else [128, 128],
        })
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def load(cls, directory) -> "EpisodeEventDataset":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        episodes = [read_episode_rle(directory / e["file"]) for e in manifest["episodes"]]
        meta = {k: v for k, v in manifest.items()
                if k not in ("episodes", "n_episodes", "n_frames", "frame_shape")}
        return cls(episodes, meta)


def moving_bar_dataset(n_frames: int = 5000, episode_len: int = 50, hw=(128, 128),
                       seed: int = 0) -> EpisodeEventDataset:
    """Synthetic event episodes: a bar sweeps the frame, events mark its motion.

    Each episode picks an orientation, width, speed, and direction; the event
    frame at step t is the set of pixels whose bar occupancy changed since
    t-1, mimicking change-detection events.
    """
    rng = np.random.default_rng(seed)
    h, w = hw
    episodes = []
    remaining = n_frames
    while remaining > 0:
        n = min(episode_len, remaining)
        horizontal = bool(rng.random() < 0.5)
        span = h if horizontal else w
        width = int(rng.integers(6, 20))
        speed = float(rng.uniform(1.0, 4.0)) * (1 if rng.random() < 0.5 else -1)
        pos = float(rng.uniform(0, span - width))
        frames = np.zeros((n, h, w), dtype=np.uint8)
        prev = np.zeros((h, w), dtype=np.uint8)
        for t in range(n):
            occ = np.zeros((h, w), dtype=np.uint8)
            lo = int(round(pos)) % span
            idx = (np.arange(lo, lo + width) % span)
            if horizontal:
                occ[idx, :] = 1
            else:
                occ[:, idx] = 1
            frames[t] = occ ^ prev
            prev = occ
            pos += speed
        episodes.append(frames)
        remaining -= n
    return EpisodeEventDataset(episodes, {"source": "moving-bar", "seed": seed})
