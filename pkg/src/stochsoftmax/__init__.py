"""Stochastic softmax clip sampling and softmax temporal pooling for weakly labelled videos."""

from .metrics import accuracy, eer_accuracy, equal_error_rate, roc_auc, roc_curve
from .pooling import average_pool, cross_entropy, jensen_gap, softmax_pool, softmax_pool_segments
from .reinforce import ReinforceTrack, expected_gradient_oracle, reinforce_step, score_direction
from .sampler import (
    Phase,
    PhaseKind,
    SamplerConfig,
    ScoreTrack,
    initialize_segment,
    phase_for_epoch,
    sample_clip,
    sample_from_external,
    softmax_weights,
    update_track,
)
from .simkit import DatasetParams, generate_dataset
from .trainer import TrainRunConfig, run

__version__ = "0.1.0"

__all__ = [
    "accuracy", "eer_accuracy", "equal_error_rate", "roc_auc", "roc_curve",
    "average_pool", "cross_entropy", "jensen_gap", "softmax_pool", "softmax_pool_segments",
    "ReinforceTrack", "expected_gradient_oracle", "reinforce_step", "score_direction",
    "Phase", "PhaseKind", "SamplerConfig", "ScoreTrack", "initialize_segment", "phase_for_epoch",
    "sample_clip", "sample_from_external", "softmax_weights", "update_track",
    "DatasetParams", "generate_dataset", "TrainRunConfig", "run",
]
