"""Synthetic training data: shot pools and generated transitions.

Training sequences are made on demand by sampling two shots from a pool and
joining them with either a hard cut or a dissolve. Each sequence carries one
positive label: the first frame of the second shot for a cut, the middle
frame of the blend for a dissolve. All randomness flows through one
caller-supplied generator, so a run is reproducible from (pool, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import frames_io
from .errors import FormatError

DISSOLVE_MIN = 5
DISSOLVE_MAX = 30


@dataclass
class ShotPool:
    """Decoded shots (uint8 [frames, height, width, 3]) plus their origins."""

    shots: list[np.ndarray]
    source_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.source_ids:
            self.source_ids = [str(i) for i in range(len(self.shots))]
        if len(self.source_ids) != len(self.shots):
            raise ValueError("one source id per shot required")
        geometries = {s.shape[1:] for s in self.shots}
        if len(geometries) > 1:
            raise ValueError(f"shots disagree on frame geometry: {sorted(geometries)}")

    def __len__(self) -> int:
        return len(self.shots)

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.shots[0].shape[1:]


@dataclass
class LabeledSequence:
    """One synthetic training example.

    ``interval`` is the inclusive transition span: [p, p+1] for a cut whose
    last first-shot frame is p, [s, s+T-1] for a T-frame dissolve starting
    at s. Exactly one label is true.
    """

    frames: np.ndarray  # uint8 [N, height, width, 3]
    labels: np.ndarray  # bool [N]
    kind: str  # "cut" | "dissolve"
    interval: tuple[int, int]
    dissolve_len: int | None = None


def build_shot_pool(
    segments,
    take_every_other: bool = False,
    min_len: int = 5,
) -> ShotPool:
    """Filter segments shorter than ``min_len`` frames, then optionally keep
    every other survivor (in that order). ``segments`` yields
    (source_id, frames) pairs; order is preserved.
    """
    kept_ids: list[str] = []
    kept: list[np.ndarray] = []
    for source_id, frames in segments:
        frames = np.asarray(frames)
        if frames.ndim != 4 or frames.shape[3] != 3 or frames.dtype != np.uint8:
            raise ValueError(
                f"segment {source_id!r} must be uint8 [frames,H,W,3], got "
                f"{frames.dtype} {frames.shape}"
            )
        if frames.shape[0] >= min_len:
            kept_ids.append(str(source_id))
            kept.append(frames)
    if take_every_other:
        kept = kept[::2]
        kept_ids = kept_ids[::2]
    if not kept:
        raise ValueError("shot pool is empty after filtering")
    return ShotPool(shots=kept, source_ids=kept_ids)


def _run_start(rng: np.random.Generator, shot_len: int, need: int) -> int:
    """Random start offset of a contiguous ``need``-frame run within a shot."""
    return int(rng.integers(0, shot_len - need + 1))


def make_hard_cut(
    shot_a: np.ndarray, shot_b: np.ndarray, n: int, rng: np.random.Generator
) -> LabeledSequence:
    """Join two shots with an instantaneous cut at a random position.

    The cut position p (index of the last first-shot frame) is uniform over
    the positions both shots can fill; frames 0..p come from shot A and
    p+1..n-1 from shot B, each a contiguous run with a random start offset.
    """
    len_a, len_b = shot_a.shape[0], shot_b.shape[0]
    lo = max(0, n - 1 - len_b)
    hi = min(n - 2, len_a - 1)
    if n < 2 or lo > hi:
        raise ValueError(
            f"shots of {len_a} and {len_b} frames are too short for an {n}-frame cut"
        )
    p = int(rng.integers(lo, hi + 1))
    a_start = _run_start(rng, len_a, p + 1)
    b_start = _run_start(rng, len_b, n - 1 - p)
    frames = np.concatenate(
        [shot_a[a_start : a_start + p + 1], shot_b[b_start : b_start + n - 1 - p]]
    )
    labels = np.zeros(n, dtype=bool)
    labels[p + 1] = True
    return LabeledSequence(frames=frames, labels=labels, kind="cut", interval=(p, p + 1))


def make_dissolve(
    shot_a: np.ndarray, shot_b: np.ndarray, n: int, rng: np.random.Generator
) -> LabeledSequence:
    """Join two shots with a linear dissolve of random length T in [5, 30].

    Blend frame k (k = 1..T) is round((1 - a_k) * A + a_k * B) with
    a_k = k / (T+1), so the frames right before and after the blend are
    pure; the label sits at offset floor(T/2) inside the dissolve. An
    infeasible T for the sequence length is resampled once from the
    feasible range.
    """
    len_a, len_b = shot_a.shape[0], shot_b.shape[0]
    if n - 2 < DISSOLVE_MIN:
        raise ValueError(f"{n}-frame sequence cannot hold a dissolve plus pure frames")
    t = int(rng.integers(DISSOLVE_MIN, DISSOLVE_MAX + 1))
    if t > n - 2:
        t = int(rng.integers(DISSOLVE_MIN, min(DISSOLVE_MAX, n - 2) + 1))
    # s pure A-frames, then T blended, then pure B: A supplies s+T frames,
    # B supplies n-s frames.
    s_lo = max(1, n - len_b)
    s_hi = min(n - 1 - t, len_a - t)
    if s_lo > s_hi:
        raise ValueError(
            f"shots of {len_a} and {len_b} frames are too short for an {n}-frame dissolve"
        )
    s = int(rng.integers(s_lo, s_hi + 1))
    a_start = _run_start(rng, len_a, s + t)
    b_start = _run_start(rng, len_b, n - s)
    run_a = shot_a[a_start : a_start + s + t]
    run_b = shot_b[b_start : b_start + n - s]
    frames = np.empty((n,) + shot_a.shape[1:], dtype=np.uint8)
    frames[:s] = run_a[:s]
    alphas = np.arange(1, t + 1, dtype=np.float64) / (t + 1)
    blend = (1.0 - alphas)[:, None, None, None] * run_a[s : s + t] + alphas[
        :, None, None, None
    ] * run_b[:t]
    frames[s : s + t] = np.floor(blend + 0.5).astype(np.uint8)  # round half up
    frames[s + t :] = run_b[t:]
    labels = np.zeros(n, dtype=bool)
    labels[s + t // 2] = True
    return LabeledSequence(
        frames=frames,
        labels=labels,
        kind="dissolve",
        interval=(s, s + t - 1),
        dissolve_len=t,
    )


def sample_batch(
    pool: ShotPool,
    batch_size: int = 20,
    n: int = 100,
    cut_probability: float = 0.5,
    rng: np.random.Generator | None = None,
) -> list[LabeledSequence]:
    """A batch of independently generated sequences.

    Each example draws two distinct shots and a transition kind. Pairs that
    cannot fill the sequence are redrawn (bounded), which keeps generation
    deterministic under a seeded rng.
    """
    if len(pool) < 2:
        raise ValueError(f"need at least 2 shots to sample transitions, pool has {len(pool)}")
    if rng is None:
        rng = np.random.default_rng()
    batch = []
    for _ in range(batch_size):
        for attempt in range(100):
            ia, ib = rng.choice(len(pool), size=2, replace=False)
            maker = make_hard_cut if rng.random() < cut_probability else make_dissolve
            try:
                batch.append(maker(pool.shots[ia], pool.shots[ib], n, rng))
                break
            except ValueError:
                continue
        else:
            raise ValueError(f"pool shots are too short to fill {n}-frame sequences")
    return batch


def load_pool_manifest(
    path: str | Path, take_every_other: bool = False, min_len: int = 5
) -> ShotPool:
    """Build a pool from a JSON manifest of {video_id, frames_file, offset, length}.

    ``frames_file`` paths are resolved relative to the manifest.
    """
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise FormatError(f"{path}: manifest must be a JSON list of segment entries")

    def segments():
        for i, entry in enumerate(entries):
            try:
                video_id = entry["video_id"]
                frames_file = entry["frames_file"]
                offset = int(entry["offset"])
                length = int(entry["length"])
            except (KeyError, TypeError) as exc:
                raise FormatError(f"{path}: entry {i} missing field: {exc}") from exc
            frames = frames_io.read_frames(path.parent / frames_file)
            if offset < 0 or offset + length > frames.shape[0]:
                raise FormatError(
                    f"{path}: entry {i} range [{offset}, {offset + length}) exceeds "
                    f"{frames.shape[0]} frames in {frames_file}"
                )
            yield video_id, frames[offset : offset + length]

    return build_shot_pool(segments(), take_every_other=take_every_other, min_len=min_len)


def save_sequence(seq: LabeledSequence, base_path: str | Path) -> None:
    """Write one sequence as <base>.tnsf frames plus a <base>.json sidecar."""
    base = Path(base_path)
    frames_io.write_frames(base.with_suffix(".tnsf"), seq.frames)
    meta = {
        "kind": seq.kind,
        "interval": list(seq.interval),
        "dissolve_len": seq.dissolve_len,
        "labels": [int(i) for i in np.flatnonzero(seq.labels)],
        "num_frames": int(seq.frames.shape[0]),
    }
    base.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_sequence(base_path: str | Path) -> LabeledSequence:
    base = Path(base_path)
    frames = frames_io.read_frames(base.with_suffix(".tnsf"))
    meta = json.loads(base.with_suffix(".json").read_text())
    labels = np.zeros(frames.shape[0], dtype=bool)
    labels[meta["labels"]] = True
    return LabeledSequence(
        frames=frames,
        labels=labels,
        kind=meta["kind"],
        interval=tuple(meta["interval"]),
        dissolve_len=meta["dissolve_len"],
    )
