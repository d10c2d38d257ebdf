"""Adam training on freshly synthesized batches with per-epoch validation.

The schedule follows the defaults baked into :class:`TrainPlan`: batches of
20 sequences, 30 epochs of 300 batches, Adam at learning rate 0.001 with
cross-entropy loss. Batch gradients are the mean of per-sequence gradients,
so the learning rate is insensitive to batch size. After every epoch the
average F1 on a validation set (at theta = 0.1) is recorded and the best
snapshot kept; ties keep the earlier epoch. Class imbalance is left alone:
detection lowers the acceptance threshold instead of re-weighting the loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import save_weights
from .detect import predict_video, shots_from_predictions
from .errors import NumericError
from .evaluate import EvalCounts, average_f1, match_transitions
from .intervals import IntervalList
from .model import (
    ModelConfig,
    WeightStore,
    init_weights,
    transnet_backward,
    transnet_forward,
)
from .ops import cross_entropy_from_logits
from .synth import LabeledSequence, ShotPool, sample_batch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates and the step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, weights: WeightStore) -> "AdamState":
        return cls(
            m={k: np.zeros_like(w) for k, w in weights.items()},
            v={k: np.zeros_like(w) for k, w in weights.items()},
        )


@dataclass
class TrainPlan:
    epochs: int = 30
    batches_per_epoch: int = 300
    batch_size: int = 20
    learning_rate: float = 0.001
    seed: int = 0
    theta: float = 0.1  # validation threshold for checkpoint selection
    cut_probability: float = 0.5
    grad_clip: float | None = None  # global-norm clip, off by default
    target_f1: float | None = None  # optional early stop once validation reaches it

    def __post_init__(self):
        for name in ("epochs", "batches_per_epoch", "batch_size", "learning_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    val_f1: float
    checkpoint_path: str = ""


def adam_step(
    weights: WeightStore,
    grads: WeightStore,
    state: AdamState,
    lr: float = 0.001,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> tuple[WeightStore, AdamState]:
    """One bias-corrected Adam update, in place; t increments once per call."""
    if set(weights) != set(grads) or set(weights) != set(state.m):
        raise ValueError("weights, grads and Adam state must share one key set")
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, w in weights.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        w -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
    return weights, state


def batch_gradients(
    config: ModelConfig, weights: WeightStore, batch: list[LabeledSequence]
) -> tuple[float, WeightStore]:
    """Mean loss and mean gradients over a batch of sequences."""
    total: WeightStore | None = None
    losses = []
    for seq in batch:
        _, cache = transnet_forward(config, weights, seq.frames)
        loss, _ = cross_entropy_from_logits(cache.logits, seq.labels)
        losses.append(loss)
        grads = transnet_backward(cache, labels=seq.labels)
        if total is None:
            total = grads
        else:
            for name in total:
                total[name] += grads[name]
    scale = 1.0 / len(batch)
    for name in total:
        total[name] *= scale
    return float(np.mean(losses)), total


def _clip_global_norm(grads: WeightStore, max_norm: float) -> None:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor


ValidationSet = list[tuple[np.ndarray, IntervalList]]  # (frames, gt transitions)


def validation_scores(
    config: ModelConfig,
    weights: WeightStore,
    validation: ValidationSet,
    theta: float,
) -> list[EvalCounts]:
    counts = []
    for frames, gt in validation:
        track = predict_video(config, weights, frames)
        _, transitions = shots_from_predictions(track, theta)
        counts.append(match_transitions(transitions, gt))
    return counts


def _batch_source(pool, plan: TrainPlan, rng: np.random.Generator):
    """On-demand batches from a ShotPool, or resampled fixed sequences."""
    if isinstance(pool, ShotPool):

        def draw(n_frames: int) -> list[LabeledSequence]:
            return sample_batch(
                pool,
                batch_size=plan.batch_size,
                n=n_frames,
                cut_probability=plan.cut_probability,
                rng=rng,
            )

    else:
        fixed = list(pool)
        if not fixed:
            raise ValueError("fixed training set is empty")

        def draw(n_frames: int) -> list[LabeledSequence]:
            replace = len(fixed) < plan.batch_size
            idx = rng.choice(len(fixed), size=plan.batch_size, replace=replace)
            return [fixed[i] for i in idx]

    return draw


def train(
    config: ModelConfig,
    pool: ShotPool | list[LabeledSequence],
    plan: TrainPlan,
    validation: ValidationSet,
    checkpoint_dir: str | Path | None = None,
) -> tuple[WeightStore, list[EpochRecord]]:
    """Run the full schedule and return the best validation snapshot.

    ``pool`` is either a ShotPool (batches synthesized on demand) or a fixed
    list of sequences (resampled each batch). Divergence (non-finite loss or
    gradient) aborts the run and returns the last good snapshot.
    """
    if not validation:
        raise ValueError("a non-empty validation set is required for checkpoint selection")
    rng = np.random.default_rng(plan.seed)
    weights = init_weights(config, plan.seed)
    state = AdamState.zeros_like(weights)
    draw = _batch_source(pool, plan, rng)
    history: list[EpochRecord] = []
    best_f1 = -1.0
    best_weights = {k: w.copy() for k, w in weights.items()}
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, plan.epochs + 1):
        losses = []
        for _ in range(plan.batches_per_epoch):
            batch = draw(config.window)
            try:
                loss, grads = batch_gradients(config, weights, batch)
                if not np.isfinite(loss):
                    return best_weights, history
                if plan.grad_clip is not None:
                    _clip_global_norm(grads, plan.grad_clip)
                adam_step(weights, grads, state, lr=plan.learning_rate)
            except NumericError:
                # diverged; hand back the last snapshot that validated
                return best_weights, history
            losses.append(loss)
        counts = validation_scores(config, weights, validation, plan.theta)
        val_f1 = average_f1(counts)
        path = ""
        if checkpoint_dir is not None:
            path = str(checkpoint_dir / f"epoch_{epoch:03d}.tnsw")
            save_weights(weights, config, path)
        history.append(
            EpochRecord(epoch=epoch, mean_loss=float(np.mean(losses)), val_f1=val_f1, checkpoint_path=path)
        )
        if val_f1 > best_f1:  # ties keep the earlier epoch
            best_f1 = val_f1
            best_weights = {k: w.copy() for k, w in weights.items()}
        if plan.target_f1 is not None and best_f1 >= plan.target_f1:
            break
    return best_weights, history


def write_history_csv(path: str | Path, history: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "val_f1", "checkpoint_path"])
        for rec in history:
            writer.writerow(
                [rec.epoch, f"{rec.mean_loss:.6f}", f"{rec.val_f1:.6f}", rec.checkpoint_path]
            )
