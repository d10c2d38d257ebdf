"""Command-line surface tying the pipeline together.

Subcommands: ingest, synth, train, detect, eval, sweep, info. Exit codes:
0 success, 1 usage, 2 data/format error, 3 numeric failure. The --threads
flag (mirrored by TRANSNET_THREADS) bounds internal parallelism; outputs do
not depend on it. Every run writes its fully resolved configuration next to
its outputs so results can be reproduced.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint, detect, evaluate, frames_io, intervals, synth, train as train_mod
from .errors import FormatError, NumericError
from .model import (
    ModelConfig,
    init_weights,
    layer_output_shapes,
    param_count,
    receptive_field_temporal,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# Paper-default run settings; flags beat the config file, which beats these.
DEFAULTS = {
    "cells_per_block": 2,
    "num_blocks": 3,
    "base_filters": 16,
    "dense_units": 256,
    "window": 100,
    "frame_width": 48,
    "frame_height": 27,
    "theta": 0.1,
    "learning_rate": 0.001,
    "batch_size": 20,
    "epochs": 30,
    "batches_per_epoch": 300,
    "seed": 0,
    "cut_probability": 0.5,
}

_CONFIG_KEYS = (
    "cells_per_block",
    "num_blocks",
    "base_filters",
    "dense_units",
    "window",
    "frame_width",
    "frame_height",
)


class _Parser(argparse.ArgumentParser):
    """argparse, but usage problems exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads_default() -> int:
    env = os.environ.get("TRANSNET_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with run settings (flags win)")
    p.add_argument("--cells-per-block", type=int, dest="cells_per_block")
    p.add_argument("--num-blocks", type=int, dest="num_blocks")
    p.add_argument("--base-filters", type=int, dest="base_filters")
    p.add_argument("--dense-units", type=int, dest="dense_units")
    p.add_argument("--window", type=int, help="frames per forward pass")
    p.add_argument("--frame-width", type=int, dest="frame_width")
    p.add_argument("--frame-height", type=int, dest="frame_height")


def resolve_settings(args: argparse.Namespace) -> dict:
    """DEFAULTS <- config file <- explicit flags, flags winning."""
    settings = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{config_path}: not valid JSON: {exc}") from exc
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise FormatError(f"{config_path}: unknown setting(s) {sorted(unknown)}")
        settings.update(loaded)
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def model_config_from(settings: dict) -> ModelConfig:
    return ModelConfig(
        cells_per_block=settings["cells_per_block"],
        num_blocks=settings["num_blocks"],
        base_filters=settings["base_filters"],
        dense_units=settings["dense_units"],
        window=settings["window"],
        width=settings["frame_width"],
        height=settings["frame_height"],
    )


def _write_provenance(settings: dict, out: Path, extra: dict | None = None) -> None:
    resolved = dict(settings)
    if extra:
        resolved.update(extra)
    target = out / "runconfig.json" if out.is_dir() else out.with_name(out.name + ".runconfig.json")
    target.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def cmd_ingest(args) -> int:
    settings = resolve_settings(args)
    count = frames_io.ingest(
        args.decoder,
        args.video,
        args.out,
        width=settings["frame_width"],
        height=settings["frame_height"],
    )
    _write_provenance(settings, Path(args.out), {"command": "ingest", "video": args.video})
    print(f"ingested {count} frames -> {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    settings = resolve_settings(args)
    pool = synth.load_pool_manifest(
        args.pool, take_every_other=args.take_every_other, min_len=args.min_len
    )
    rng = np.random.default_rng(settings["seed"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sequences = synth.sample_batch(
        pool,
        batch_size=args.count,
        n=settings["window"],
        cut_probability=settings["cut_probability"],
        rng=rng,
    )
    for i, seq in enumerate(sequences):
        synth.save_sequence(seq, out_dir / f"seq_{i:05d}")
    _write_provenance(settings, out_dir, {"command": "synth", "count": args.count})
    cuts = sum(1 for s in sequences if s.kind == "cut")
    print(f"wrote {len(sequences)} sequences ({cuts} cuts) -> {out_dir}")
    return EXIT_OK


def _load_validation(val_dir: Path) -> train_mod.ValidationSet:
    validation = []
    for gt_path in sorted(val_dir.glob("*.txt")):
        frames_path = gt_path.with_suffix(".tnsf")
        if not frames_path.exists():
            raise FormatError(f"validation entry {gt_path} has no frames file {frames_path}")
        validation.append((frames_io.read_frames(frames_path), intervals.read_intervals(gt_path)))
    if not validation:
        raise FormatError(f"no validation pairs (*.tnsf + *.txt) found in {val_dir}")
    return validation


def cmd_train(args) -> int:
    settings = resolve_settings(args)
    config = model_config_from(settings)
    pool = synth.load_pool_manifest(
        args.pool, take_every_other=args.take_every_other, min_len=args.min_len
    )
    validation = _load_validation(Path(args.val))
    plan = train_mod.TrainPlan(
        epochs=settings["epochs"],
        batches_per_epoch=settings["batches_per_epoch"],
        batch_size=settings["batch_size"],
        learning_rate=settings["learning_rate"],
        seed=settings["seed"],
        theta=settings["theta"],
        cut_probability=settings["cut_probability"],
        grad_clip=args.grad_clip,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_provenance(settings, out_dir, {"command": "train", "pool": args.pool})
    best, history = train_mod.train(
        config, pool, plan, validation, checkpoint_dir=out_dir / "checkpoints"
    )
    checkpoint.save_weights(best, config, out_dir / "best.tnsw")
    train_mod.write_history_csv(out_dir / "history.csv", history)
    if history:
        top = max(history, key=lambda r: r.val_f1)
        print(f"best validation F1 {top.val_f1:.3f} at epoch {top.epoch}; saved {out_dir/'best.tnsw'}")
    return EXIT_OK


def cmd_detect(args) -> int:
    settings = resolve_settings(args)
    config, store = checkpoint.load_weights(args.weights)
    frames = frames_io.read_frames(args.frames)
    started = time.perf_counter()
    track = detect.predict_video(config, store, frames, threads=args.threads)
    elapsed = time.perf_counter() - started
    shots, transitions = detect.shots_from_predictions(track, settings["theta"])
    intervals.write_intervals(args.out, shots)
    if args.transitions_out:
        intervals.write_intervals(args.transitions_out, transitions)
    _write_provenance(
        settings, Path(args.out), {"command": "detect", "weights": args.weights}
    )
    fps = frames.shape[0] / elapsed if elapsed > 0 else float("inf")
    print(
        f"{len(shots)} shots, {len(transitions)} transitions over {frames.shape[0]} frames "
        f"({fps:.1f} frames/s)"
    )
    return EXIT_OK


def _paired_files(pred_dir: Path, gt_dir: Path) -> list[tuple[str, Path, Path]]:
    pairs = []
    for gt_path in sorted(gt_dir.glob("*.txt")):
        pred_path = pred_dir / gt_path.name
        if not pred_path.exists():
            raise FormatError(f"no prediction file for {gt_path.name} in {pred_dir}")
        pairs.append((gt_path.stem, pred_path, gt_path))
    if not pairs:
        raise FormatError(f"no ground-truth interval files (*.txt) in {gt_dir}")
    return pairs


def cmd_eval(args) -> int:
    settings = resolve_settings(args)
    pairs = _paired_files(Path(args.pred), Path(args.gt))
    ids, counts = [], []
    for video_id, pred_path, gt_path in pairs:
        counts.append(
            evaluate.match_transitions(
                intervals.read_intervals(pred_path), intervals.read_intervals(gt_path)
            )
        )
        ids.append(video_id)
    evaluate.write_report_csv(args.out, ids, counts)
    _write_provenance(settings, Path(args.out), {"command": "eval"})
    print(
        f"{len(counts)} videos: average F1 {evaluate.average_f1(counts):.3f}, "
        f"overall F1 {evaluate.overall_f1(counts):.3f} -> {args.out}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    settings = resolve_settings(args)
    config, store = checkpoint.load_weights(args.weights)
    frames_dir, gt_dir = Path(args.frames), Path(args.gt)
    tracks, gts = [], []
    for gt_path in sorted(gt_dir.glob("*.txt")):
        frames_path = frames_dir / (gt_path.stem + ".tnsf")
        if not frames_path.exists():
            raise FormatError(f"no frames file for {gt_path.name} in {frames_dir}")
        frames = frames_io.read_frames(frames_path)
        tracks.append(detect.predict_video(config, store, frames, threads=args.threads))
        gts.append(intervals.read_intervals(gt_path))
    if not tracks:
        raise FormatError(f"no ground-truth interval files (*.txt) in {gt_dir}")
    thetas = None
    if args.thetas:
        thetas = [float(v) for v in args.thetas.split(",") if v.strip()]
    points = evaluate.pr_sweep(tracks, gts, thetas)
    evaluate.write_sweep_csv(args.out, points)
    _write_provenance(settings, Path(args.out), {"command": "sweep"})
    best = max(points, key=lambda p: p.f1)
    print(f"{len(points)} thresholds swept; best F1 {best.f1:.3f} at theta {best.theta:.2f}")
    return EXIT_OK


def cmd_info(args) -> int:
    settings = resolve_settings(args)
    if args.weights:
        config, _ = checkpoint.load_weights(args.weights)
    else:
        config = model_config_from(settings)
    print(f"parameters: {param_count(config):,}")
    print(f"temporal receptive field: {receptive_field_temporal(config)} frames")
    print("layer outputs:")
    for name, shape in layer_output_shapes(config):
        print(f"  {name:<16} {'x'.join(str(e) for e in shape)}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="transnet", description=__doc__)
    parser.add_argument(
        "--threads",
        type=int,
        default=_threads_default(),
        help="worker threads for window inference (env TRANSNET_THREADS)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="decode a video into a raw frame file")
    p.add_argument("video")
    p.add_argument("-o", "--out", required=True)
    p.add_argument(
        "--decoder",
        required=True,
        help="command writing raw RGB24 frames to stdout; {input} expands to the video path",
    )
    _add_model_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate labeled synthetic sequences")
    p.add_argument("--pool", required=True, help="shot pool manifest (JSON)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--cut-probability", type=float, dest="cut_probability")
    p.add_argument("--take-every-other", action="store_true")
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("-o", "--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on synthesized batches")
    p.add_argument("--pool", required=True, help="shot pool manifest (JSON)")
    p.add_argument("--val", required=True, help="directory of <name>.tnsf + <name>.txt pairs")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batches-per-epoch", type=int, dest="batches_per_epoch")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--seed", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--cut-probability", type=float, dest="cut_probability")
    p.add_argument("--grad-clip", type=float, dest="grad_clip")
    p.add_argument("--take-every-other", action="store_true")
    p.add_argument("--min-len", type=int, default=5)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="detect shots in a raw frame file")
    p.add_argument("--weights", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--theta", type=float)
    p.add_argument("-o", "--out", required=True, help="shot list output")
    p.add_argument("--transitions-out", help="also write the transition list")
    _add_model_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score predicted transition lists against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted interval files")
    p.add_argument("--gt", required=True, help="directory of ground-truth interval files")
    p.add_argument("-o", "--out", required=True, help="report CSV")
    _add_model_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="precision/recall over a threshold sweep")
    p.add_argument("--weights", required=True)
    p.add_argument("--frames", required=True, help="directory of .tnsf frame files")
    p.add_argument("--gt", required=True, help="directory of ground-truth interval files")
    p.add_argument("--thetas", help="comma-separated thresholds (default 0.05..0.90)")
    p.add_argument("-o", "--out", required=True, help="PR CSV")
    _add_model_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("info", help="parameter count, receptive field and layer shapes")
    p.add_argument("--weights", help="read the architecture from a weight file")
    _add_model_flags(p)
    p.set_defaults(func=cmd_info)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"transnet: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"transnet: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"transnet: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
