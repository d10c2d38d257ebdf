"""Overlap-based transition matching and F1 scoring.

A predicted transition is a true positive iff its inclusive interval
intersects a ground-truth transition that no earlier prediction already
matched; re-detections and no-overlap predictions are false positives;
unmatched ground truths are false negatives. Scores are reported per
video, as the unweighted mean of per-video F1, and as the F1 of counts
pooled over the whole dataset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detect import shots_from_predictions
from .intervals import IntervalList, validate_intervals


@dataclass(frozen=True)
class EvalCounts:
    """Per-video tally: ground-truth transitions and TP/FP/FN."""

    n_gt: int
    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.n_gt, self.tp, self.fp, self.fn) < 0:
            raise ValueError(f"counts must be non-negative: {self}")
        if self.tp + self.fn != self.n_gt:
            raise ValueError(f"tp + fn must equal n_gt: {self}")


@dataclass(frozen=True)
class PRPoint:
    theta: float
    precision: float
    recall: float
    f1: float


def match_transitions(predicted: IntervalList, gt: IntervalList) -> EvalCounts:
    """Greedy first-come matching of predicted against ground-truth transitions.

    Both lists must be sorted and disjoint. Predictions are scanned in
    temporal order; each one matches the earliest not-yet-matched ground
    truth it overlaps (TP), or counts as FP when it overlaps none or only
    already-matched ones.
    """
    validate_intervals(predicted, "predicted transitions")
    validate_intervals(gt, "ground-truth transitions")
    matched = [False] * len(gt)
    tp = fp = 0
    base = 0  # first ground truth that could still overlap the current prediction
    for p_start, p_end in predicted:
        while base < len(gt) and gt[base][1] < p_start:
            base += 1
        hit = False
        j = base
        while j < len(gt) and gt[j][0] <= p_end:
            if not matched[j]:
                matched[j] = True
                tp += 1
                hit = True
                break
            j += 1
        if not hit:
            fp += 1
    fn = matched.count(False)
    return EvalCounts(n_gt=len(gt), tp=tp, fp=fp, fn=fn)


def scores_from_counts(counts: EvalCounts) -> tuple[float, float, float]:
    """(precision, recall, F1) with the degenerate conventions:

    all-zero counts are a perfect empty-vs-empty result (1, 1, 1); an
    undefined component alone scores 0; F1 is 0 when P + R == 0.
    """
    if counts.tp == 0 and counts.fp == 0 and counts.fn == 0:
        return 1.0, 1.0, 1.0
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def average_f1(per_video: list[EvalCounts]) -> float:
    """Unweighted mean of per-video F1 scores."""
    if not per_video:
        raise ValueError("average_f1 needs at least one video")
    return float(np.mean([scores_from_counts(c)[2] for c in per_video]))


def pooled_counts(per_video: list[EvalCounts]) -> EvalCounts:
    return EvalCounts(
        n_gt=sum(c.n_gt for c in per_video),
        tp=sum(c.tp for c in per_video),
        fp=sum(c.fp for c in per_video),
        fn=sum(c.fn for c in per_video),
    )


def overall_f1(per_video: list[EvalCounts]) -> float:
    """F1 of TP/FP/FN pooled across videos."""
    if not per_video:
        raise ValueError("overall_f1 needs at least one video")
    return scores_from_counts(pooled_counts(per_video))[2]


DEFAULT_SWEEP_THETAS = tuple(round(0.05 * i, 2) for i in range(1, 19))  # 0.05 .. 0.90


def pr_sweep(
    tracks: list[np.ndarray],
    gts: list[IntervalList],
    thetas: list[float] | None = None,
) -> list[PRPoint]:
    """Pooled precision/recall/F1 at each threshold.

    Each track is thresholded into transitions, matched against its
    ground truth, and the counts pooled over videos.
    """
    if len(tracks) != len(gts):
        raise ValueError(f"{len(tracks)} tracks vs {len(gts)} ground-truth lists")
    points = []
    for theta in DEFAULT_SWEEP_THETAS if thetas is None else thetas:
        per_video = []
        for track, gt in zip(tracks, gts):
            _, transitions = shots_from_predictions(track, theta)
            per_video.append(match_transitions(transitions, gt))
        precision, recall, f1 = scores_from_counts(pooled_counts(per_video))
        points.append(PRPoint(theta=theta, precision=precision, recall=recall, f1=f1))
    return points


def write_report_csv(
    path: str | Path, video_ids: list[str], per_video: list[EvalCounts]
) -> None:
    """Per-video results table plus average and overall footer rows."""
    if len(video_ids) != len(per_video):
        raise ValueError("one video id per counts entry required")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "n_gt", "tp", "fp", "fn", "precision", "recall", "f1"])
        for vid, counts in zip(video_ids, per_video):
            precision, recall, f1 = scores_from_counts(counts)
            writer.writerow(
                [vid, counts.n_gt, counts.tp, counts.fp, counts.fn]
                + [f"{v:.3f}" for v in (precision, recall, f1)]
            )
        writer.writerow(["average", "", "", "", "", "", "", f"{average_f1(per_video):.3f}"])
        pooled = pooled_counts(per_video)
        precision, recall, f1 = scores_from_counts(pooled)
        writer.writerow(
            ["overall", pooled.n_gt, pooled.tp, pooled.fp, pooled.fn]
            + [f"{v:.3f}" for v in (precision, recall, f1)]
        )


def write_sweep_csv(path: str | Path, points: list[PRPoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "precision", "recall", "f1"])
        for pt in points:
            writer.writerow(
                [f"{pt.theta:.2f}"] + [f"{v:.6f}" for v in (pt.precision, pt.recall, pt.f1)]
            )
