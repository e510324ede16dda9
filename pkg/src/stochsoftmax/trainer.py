"""Single-clip training loop with score tracks, dense evaluation and early stopping.

Every epoch visits each training video once, in a freshly shuffled order,
and trains on exactly one clip from it.  Where that clip comes from depends
on the mode:

* ``uniform``: uniform position every epoch (the plain short-clip baseline).
* ``stochastic_softmax``: warm-up / exploration / exploitation with score tracks.
* ``reinforce``: warm-up, then positions drawn from a REINFORCE-trained
  distribution whose reward is ``gamma_sample`` times the target logit.
* ``external_profile``: softmax of the ground-truth relevance profile from
  the first epoch on (the frame-annotation analogue, no exploration needed).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import simkit
from ._rng import substream
from .metrics import accuracy, eer_accuracy, roc_auc
from .model import build_model, save_checkpoint
from .pooling import log_softmax, softmax_pool_segments
from .reinforce import ReinforceTrack, reinforce_step
from .sampler import (
    PhaseKind,
    SamplerConfig,
    ScoreTrack,
    draw_positions,
    initialize_segment,
    phase_for_epoch,
    sample_clip,
    softmax_weights,
    update_track,
    write_tracks,
)

log = logging.getLogger(__name__)

MODES = ("uniform", "stochastic_softmax", "reinforce", "external_profile")
MAX_POOL_GAMMA = 1e6


@dataclass
class TrainRunConfig:
    mode: str = "stochastic_softmax"
    clip_len: int = 16
    gamma_sample: float = 1.0
    gamma_pool: float = 1.0
    warmup_epochs: int = 3
    exploration_epochs: int = 5
    propagation_radius: Optional[int] = None
    clean_scoring: bool = True
    jitter_sigma: float = 0.0
    score_kind: str = "logit"  # or "probability"
    pooling_mode: str = "channelwise"
    model: str = "mlp"
    hidden: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 32
    max_epochs: int = 60
    patience: int = 5
    min_delta: float = 0.0
    eval_stride: int = 4
    final_stride: int = 1
    reinforce_step_size: float = 0.1
    reinforce_baseline_rate: float = 0.05
    external_scale: float = 4.0
    seed: int = 0

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"mode: unknown mode {self.mode!r}, expected one of {MODES}")
        if self.patience < 1:
            raise ValueError("patience: must be >= 1")
        if not 0.0 <= self.min_delta < 1.0:
            raise ValueError("min_delta: must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size: must be >= 1")
        if self.eval_stride < 1 or self.final_stride < 1:
            raise ValueError("eval_stride: strides must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr: must be positive")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma: must be >= 0")
        if self.score_kind not in ("logit", "probability"):
            raise ValueError(f"score_kind: unknown value {self.score_kind!r}")
        if self.pooling_mode != "channelwise":
            raise ValueError("pooling_mode: only 'channelwise' pooling is used during training runs")
        if self.mode == "stochastic_softmax" and self.max_epochs < self.warmup_epochs + self.exploration_epochs:
            raise ValueError("max_epochs: must cover the warm-up and exploration epochs")
        if self.max_epochs < 1:
            raise ValueError("max_epochs: must be >= 1")
        self.sampler_config()  # temperature / length checks

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            clip_len=self.clip_len, gamma_sample=self.gamma_sample, gamma_pool=self.gamma_pool,
            warmup_epochs=self.warmup_epochs, exploration_epochs=self.exploration_epochs,
            propagation_radius=self.propagation_radius, seed=self.seed,
        )

    @classmethod
    def from_dict(cls, values: dict) -> "TrainRunConfig":
        known = {f.name for f in fields(cls)}
        for key in values:
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**values)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    mean_relevance: float
    phase: str
    track_updates: int = 0


@dataclass
class RunRecord:
    config: TrainRunConfig
    epochs: list = field(default_factory=list)
    sampling_map: list = field(default_factory=list)  # (epoch, video_id, position, score)
    tracks: dict = field(default_factory=dict)  # video_id -> final logits of the sampler
    track_gamma: float = 1.0
    best_epoch: int = 0
    epochs_to_converge: int = 0
    test: dict = field(default_factory=dict)
    model: object = None

    @property
    def test_accuracy(self) -> float:
        return self.test["accuracy"]


# -- evaluation -------------------------------------------------------------

class EvalSet:
    """All strided clip features of a set of videos, stacked row-wise."""

    def __init__(self, videos, clip_len: int, stride: int, features: Optional[dict] = None):
        if not videos:
            raise ValueError("cannot evaluate an empty video set")
        rows, starts, offset = [], [], 0
        for v in videos:
            mat = features[v.video_id] if features is not None else simkit.clip_feature_matrix(v, clip_len)
            mat = mat[::stride]
            rows.append(mat)
            starts.append(offset)
            offset += mat.shape[0]
        self.x = np.vstack(rows)
        self.starts = np.asarray(starts, dtype=np.intp)
        self.labels = np.array([v.label for v in videos])
        self.video_ids = [v.video_id for v in videos]

    def pooled(self, model, gamma_pool: float) -> np.ndarray:
        return softmax_pool_segments(model.forward(self.x), self.starts, gamma_pool)


def evaluate(model, videos, gamma_pool: float, stride: int = 1, clip_len: int = 16,
             binary: Optional[bool] = None, eval_set: Optional[EvalSet] = None) -> dict:
    """Dense strided evaluation with softmax pooling.

    Returns accuracy and mean pooled cross-entropy; for two-class tasks also
    ROC-AUC and accuracy at the equal-error-rate point, scored on the logit
    difference of the pooled prediction.
    """
    es = eval_set if eval_set is not None else EvalSet(videos, clip_len, stride)
    n_classes = model.n_classes
    if binary is None:
        binary = n_classes == 2
    elif binary and n_classes != 2:
        raise ValueError(f"binary metrics need 2 classes, model has {n_classes}")
    pooled = es.pooled(model, gamma_pool)
    logp = log_softmax(pooled, axis=1)
    out = {
        "accuracy": accuracy(np.argmax(pooled, axis=1), es.labels),
        "loss": float(-logp[np.arange(len(es.labels)), es.labels].mean()),
    }
    if binary:
        score = pooled[:, 1] - pooled[:, 0]
        out["roc_auc"] = roc_auc(score, es.labels)
        out["eer_accuracy"] = eer_accuracy(score, es.labels)
    return out


# -- training ---------------------------------------------------------------

class EarlyStopping:
    """Tracks the best validation loss; ``step`` returns True when training should stop.

    A loss counts as an improvement only when it beats the best so far by
    more than ``min_delta`` relative to that best.
    """

    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def step(self, epoch: int, val_loss: float) -> bool:
        # losses are nonnegative, so the threshold is a relative margin
        if val_loss < self.best * (1.0 - self.min_delta):
            self.best, self.best_epoch, self.bad_epochs = val_loss, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    @property
    def improved_last(self) -> bool:
        return self.bad_epochs == 0


class TrainState:
    def __init__(self, config: TrainRunConfig, train_videos, n_classes: int, dim: int):
        config.validate()
        self.config = config
        self.sampler = config.sampler_config()
        self.videos = list(train_videos)
        self.model = build_model(config.model, n_classes, dim, rng=substream(config.seed, "model"),
                                 hidden=config.hidden)
        f = config.clip_len
        self.features = {v.video_id: simkit.clip_feature_matrix(v, f) for v in self.videos}
        self.relevance = {v.video_id: simkit.clip_relevance(v, f) for v in self.videos}
        self.tracks = {v.video_id: ScoreTrack.uniform(v.video_id, simkit.n_clips(v, f)) for v in self.videos}
        self.reinforce = {
            v.video_id: ReinforceTrack.uniform(simkit.n_clips(v, f), step_size=config.reinforce_step_size,
                                               baseline_rate=config.reinforce_baseline_rate)
            for v in self.videos
        }
        self.augment = simkit.AugmentationModel(config.jitter_sigma)
        self.rng_sampling = substream(config.seed, "sampling")
        self.rng_noise = substream(config.seed, "noise")
        self.sampling_map = []

    def observe(self, features, label) -> float:
        if self.config.score_kind == "probability":
            z = self.model.forward(features)
            return float(np.exp(log_softmax(z)[label]))
        return self.model.target_score(features, label)


def _choose_position(state: TrainState, video, epoch: int):
    """Returns (position, phase name, phase object or None)."""
    cfg, vid = state.config, video.video_id
    rng = state.rng_sampling
    if cfg.mode == "uniform":
        return int(rng.integers(state.tracks[vid].n_clips)), "uniform", None
    if cfg.mode == "external_profile":
        profile = cfg.external_scale * state.relevance[vid]
        return draw_positions(softmax_weights(profile, cfg.gamma_sample), rng), "external", None
    phase = phase_for_epoch(epoch, state.sampler)
    if cfg.mode == "reinforce":
        if phase.kind is PhaseKind.WARMUP:
            return int(rng.integers(state.tracks[vid].n_clips)), "warmup", phase
        return draw_positions(state.reinforce[vid].distribution(), rng), "reinforce", phase
    return sample_clip(state.tracks[vid], phase, state.sampler, rng), phase.kind.value, phase


def train_epoch(state: TrainState, epoch: int) -> dict:
    """One pass of single-clip training over the training videos."""
    cfg = state.config
    order = substream(cfg.seed, "shuffle", epoch).permutation(len(state.videos))
    batch_x, batch_y = [], []
    loss_sum, n_seen, rel_sum, updates = 0.0, 0, 0.0, 0
    phase_name = ""

    def flush():
        nonlocal loss_sum, n_seen
        loss, grads = state.model.loss_and_grad(np.array(batch_x), np.array(batch_y))
        state.model.sgd_step(grads, cfg.lr, cfg.momentum, cfg.weight_decay)
        loss_sum += loss * len(batch_y)
        n_seen += len(batch_y)
        batch_x.clear()
        batch_y.clear()

    for i in order:
        video = state.videos[i]
        vid, y = video.video_id, video.label
        t, phase_name, phase = _choose_position(state, video, epoch)
        clean = state.features[vid][t]
        augmented = state.augment.apply(clean, state.rng_noise)
        # scored with the current parameters, i.e. before this clip's gradient step
        score = state.observe(clean if cfg.clean_scoring else augmented, y)
        if cfg.mode == "stochastic_softmax" and phase.updates_track:
            track = state.tracks[vid]
            if phase.kind is PhaseKind.EXPLORATION:
                initialize_segment(track, phase.step, state.sampler.exploration_epochs, score)
            else:
                update_track(track, t, score, state.sampler.propagation_radius)
            updates += 1
        elif cfg.mode == "reinforce" and phase.kind is not PhaseKind.WARMUP:
            reinforce_step(state.reinforce[vid], t, cfg.gamma_sample * score)
            updates += 1
        state.sampling_map.append((epoch, vid, int(t), score))
        rel_sum += state.relevance[vid][t]
        batch_x.append(augmented)
        batch_y.append(y)
        if len(batch_y) == cfg.batch_size:
            flush()
    if batch_y:
        flush()
    return {
        "train_loss": loss_sum / max(n_seen, 1),
        "mean_relevance": rel_sum / len(state.videos),
        "phase": phase_name,
        "track_updates": updates,
    }


def _final_tracks(state: TrainState):
    cfg = state.config
    if cfg.mode == "stochastic_softmax":
        return {k: t.scores.copy() for k, t in state.tracks.items()}, cfg.gamma_sample
    if cfg.mode == "reinforce":
        return {k: t.theta.copy() for k, t in state.reinforce.items()}, 1.0
    if cfg.mode == "external_profile":
        return {k: cfg.external_scale * r for k, r in state.relevance.items()}, cfg.gamma_sample
    return {k: np.zeros(t.n_clips) for k, t in state.tracks.items()}, 0.0


def run(config: TrainRunConfig, dataset: simkit.Dataset, out_dir: Optional[str] = None) -> RunRecord:
    """Train with early stopping on validation loss and evaluate on the test split.

    The best-validation parameters are restored before testing.  The test
    split is scored at the configured pooling temperature and additionally
    with average (0) and max (1e6) pooling.
    """
    config.validate()
    p = dataset.params
    state = TrainState(config, dataset.train, p.n_classes, p.feature_dim)
    val_set = EvalSet(dataset.val, config.clip_len, config.eval_stride)
    stopper = EarlyStopping(config.patience, config.min_delta)
    record = RunRecord(config=config)
    best_params = state.model.copy_params()

    for epoch in range(config.max_epochs):
        stats = train_epoch(state, epoch)
        val = evaluate(state.model, dataset.val, config.gamma_pool, binary=False, eval_set=val_set)
        record.epochs.append(EpochMetrics(
            epoch=epoch, train_loss=stats["train_loss"], val_loss=val["loss"], val_acc=val["accuracy"],
            mean_relevance=stats["mean_relevance"], phase=stats["phase"], track_updates=stats["track_updates"],
        ))
        stop = stopper.step(epoch, val["loss"])
        if stopper.improved_last:
            best_params = state.model.copy_params()
        log.debug("epoch %d loss %.4f val %.4f acc %.3f", epoch, stats["train_loss"], val["loss"], val["accuracy"])
        if stop:
            break

    state.model.load_params(best_params)
    record.best_epoch = stopper.best_epoch
    record.epochs_to_converge = stopper.best_epoch + 1
    record.sampling_map = state.sampling_map
    record.tracks, record.track_gamma = _final_tracks(state)
    record.model = state.model

    test_set = EvalSet(dataset.test, config.clip_len, config.final_stride)
    binary = p.n_classes == 2
    test = evaluate(state.model, dataset.test, config.gamma_pool, binary=binary, eval_set=test_set)
    for name, g in (("gp0", 0.0), ("gpmax", MAX_POOL_GAMMA)):
        extra = evaluate(state.model, dataset.test, g, binary=binary, eval_set=test_set)
        test.update({f"{k}_{name}": v for k, v in extra.items()})
    record.test = test
    if out_dir is not None:
        save_run(record, out_dir)
    return record


# -- persistence ------------------------------------------------------------

METRIC_COLUMNS = ("epoch", "train_loss", "val_loss", "val_acc", "mean_relevance")


def save_run(record: RunRecord, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(asdict(record.config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS + ("phase",))
        for e in record.epochs:
            w.writerow([e.epoch] + [repr(float(getattr(e, c))) for c in METRIC_COLUMNS[1:]] + [e.phase])
    with open(os.path.join(out_dir, "sampling_map.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "video_id", "position", "score"])
        w.writerows((e, v, t, repr(float(s))) for e, v, t, s in record.sampling_map)
    last_epoch = record.epochs[-1].epoch if record.epochs else 0
    write_tracks(os.path.join(out_dir, "tracks_final.csv"),
                 [ScoreTrack(k, v) for k, v in sorted(record.tracks.items())], last_epoch)
    summary = {
        "best_epoch": record.best_epoch,
        "epochs_to_converge": record.epochs_to_converge,
        "epochs_run": len(record.epochs),
        "track_gamma": record.track_gamma,
        "test": record.test,
    }
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if record.model is not None:
        save_checkpoint(record.model, os.path.join(out_dir, "model.txt"))
