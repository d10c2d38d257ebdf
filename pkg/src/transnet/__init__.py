"""Shot boundary detection with dilated 3D convolutions.

A self-contained numpy toolkit: tensor kernels with hand-derived gradients,
synthetic transition generation, Adam training, sliding-window inference,
shot-list construction and the overlap-based F1 evaluation protocol.
"""

from .evaluate import (
    EvalCounts,
    PRPoint,
    average_f1,
    match_transitions,
    overall_f1,
    pr_sweep,
    scores_from_counts,
)
from .checkpoint import load_weights, save_weights
from .detect import predict_video, shots_from_predictions, transitions_from_shotlist
from .model import (
    BEST_CONFIG,
    ModelConfig,
    init_weights,
    param_count,
    receptive_field_temporal,
    transnet_backward,
    transnet_forward,
)
from .synth import (
    LabeledSequence,
    ShotPool,
    build_shot_pool,
    make_dissolve,
    make_hard_cut,
    sample_batch,
)
from .train import AdamState, TrainPlan, adam_step, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BEST_CONFIG",
    "EvalCounts",
    "LabeledSequence",
    "ModelConfig",
    "PRPoint",
    "ShotPool",
    "TrainPlan",
    "adam_step",
    "average_f1",
    "build_shot_pool",
    "init_weights",
    "load_weights",
    "make_dissolve",
    "make_hard_cut",
    "match_transitions",
    "overall_f1",
    "param_count",
    "pr_sweep",
    "predict_video",
    "receptive_field_temporal",
    "sample_batch",
    "save_weights",
    "scores_from_counts",
    "shots_from_predictions",
    "train",
    "transitions_from_shotlist",
    "transnet_backward",
    "transnet_forward",
]
