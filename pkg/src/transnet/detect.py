"""Sliding-window inference over whole videos and shot-list construction.

A video of M frames is scanned with windows of ``config.window`` frames
shifted by half a window. Predictions near a window's edges lack temporal
context, so an interior window starting at w only retains frames
[w + margin, w + margin + shift - 1] where margin = window//4 and
shift = window - 2*margin (frames 25..74 and stride 50 for the default
100-frame window). The first window additionally keeps its head, the last
one its tail, so every frame receives exactly one prediction. Videos
shorter than a window are padded by edge replication and the predictions
truncated.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .intervals import IntervalList, complement_intervals, validate_intervals
from .model import ModelConfig, WeightStore, transnet_forward

PredictionTrack = np.ndarray  # per-frame boundary probability, length = frame count


def window_margin(window: int) -> int:
    return window // 4


def window_shift(window: int) -> int:
    return window - 2 * window_margin(window)


def window_starts(num_frames: int, window: int) -> list[int]:
    """Start offsets of all scan windows for a video of ``num_frames``."""
    if num_frames <= window:
        return [0]
    shift = window_shift(window)
    count = 1 + -(-(num_frames - window) // shift)  # ceil division
    return [k * shift for k in range(count)]


def retained_span(start: int, index: int, count: int, num_frames: int, window: int) -> tuple[int, int]:
    """Absolute frame range [lo, hi] retained from the window at ``start``."""
    margin = window_margin(window)
    lo = 0 if index == 0 else start + margin
    hi = num_frames - 1 if index == count - 1 else start + margin + window_shift(window) - 1
    return lo, hi


def predict_video(
    config: ModelConfig,
    store: WeightStore,
    frames: np.ndarray,
    threads: int = 1,
) -> PredictionTrack:
    """Boundary probability for every frame of an arbitrarily long video.

    ``frames`` is [M, height, width, 3] raw uint8 (or pre-normalized floats).
    Windows are independent given the weights, so they may be evaluated
    concurrently; the stitched track is identical for any thread count.
    """
    if frames.ndim != 4 or frames.shape[0] < 1:
        raise ValueError(f"expected at least one frame of video, got shape {frames.shape}")
    if frames.shape[1:] != (config.height, config.width, config.in_channels):
        raise ValueError(
            f"frame geometry {frames.shape[1:]} does not match configured "
            f"{(config.height, config.width, config.in_channels)}"
        )
    num_frames = frames.shape[0]
    window = config.window
    starts = window_starts(num_frames, window)

    def run_window(start: int) -> np.ndarray:
        # Edge replication: clamp indices so short/tail windows repeat the
        # last frame.
        idx = np.minimum(np.arange(start, start + window), num_frames - 1)
        probs, _ = transnet_forward(config, store, frames[idx])
        return probs[:, 1]

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            window_probs = list(pool.map(run_window, starts))
    else:
        window_probs = [run_window(start) for start in starts]

    track = np.empty(num_frames, dtype=window_probs[0].dtype)
    for index, (start, probs) in enumerate(zip(starts, window_probs)):
        lo, hi = retained_span(start, index, len(starts), num_frames, window)
        track[lo : hi + 1] = probs[lo - start : hi - start + 1]
    return track


def shots_from_predictions(
    track: np.ndarray, theta: float
) -> tuple[IntervalList, IntervalList]:
    """Threshold a prediction track into (ShotList, TransitionList).

    Frames with probability strictly above theta are transition frames;
    maximal runs of them form transitions, the complementary runs form
    shots. A track that starts above theta opens with a transition, one
    that ends above theta closes with one. Equality with theta counts as
    shot, not transition.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must be in (0, 1), got {theta}")
    track = np.asarray(track)
    mask = track > theta
    transitions = _runs(mask)
    shots = complement_intervals(transitions, len(track))
    return shots, transitions


def _runs(mask: np.ndarray) -> IntervalList:
    """Maximal runs of True as inclusive intervals."""
    if mask.size == 0:
        return []
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return [(int(edges[i]), int(edges[i + 1] - 1)) for i in range(0, len(edges), 2)]


def transitions_from_shotlist(shots: IntervalList, num_frames: int) -> IntervalList:
    """Inverse view: the gaps of a shot list within [0, num_frames-1]."""
    validate_intervals(shots, "shot list")
    return complement_intervals(shots, num_frames)
