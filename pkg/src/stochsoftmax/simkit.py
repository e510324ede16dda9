"""Synthetic weakly-labelled videos with known per-frame relevance.

A video carries one label for the whole sequence, but only the frames under
a trapezoidal expression profile (onset ramp, apex plateau, offset ramp)
actually look like that class; the rest is neutral.  A clip's feature vector
interpolates between the class prototype and a neutral prototype according
to the clip's mean relevance, plus Gaussian noise that is partly shared by the
whole video and partly smooth along time (neighbouring clips share frames).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from ._rng import substream

RAMP_RANGE = (10, 30)
PLATEAU_RANGE = (8, 40)
OCCLUSION_RANGE = (10, 30)
NON_REACTOR_AMPLITUDE = 0.3


@dataclass
class RelevanceProfile:
    values: np.ndarray
    plateau_start: int = 0
    plateau_len: int = 1
    onset_len: int = 0
    offset_len: int = 0
    amplitude: float = 1.0
    occlusions: list = field(default_factory=list)  # [start, stop) frame windows

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.size and (self.values.min() < 0 or self.values.max() > 1):
            raise ValueError("relevance must lie in [0, 1]")


@dataclass
class SyntheticVideo:
    video_id: str
    label: int
    length: int
    profile: RelevanceProfile
    n_classes: int = 4
    feature_dim: int = 16
    noise_sigma: float = 0.5
    shared_noise: float = 0.0
    prototype_scale: float = 3.0
    seed: int = 0
    non_reactor: bool = False

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("video length must be >= 1")
        if self.profile.values.shape != (self.length,):
            raise ValueError("profile length does not match video length")
        if self.feature_dim < self.n_classes + 1:
            raise ValueError("feature_dim must exceed n_classes (orthogonal prototypes)")


@dataclass
class AugmentationModel:
    jitter_sigma: float = 0.0

    def __post_init__(self):
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")

    def apply(self, features: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.jitter_sigma == 0:
            return np.array(features, dtype=np.float64)
        return features + self.jitter_sigma * rng.standard_normal(np.shape(features))


def prototypes(n_classes: int, dim: int, scale: float = 1.0) -> np.ndarray:
    """Rows 0..C-1 are class prototypes, row C the neutral one; all orthogonal."""
    if dim < n_classes + 1:
        raise ValueError("dim must exceed n_classes")
    return scale * np.eye(n_classes + 1, dim)


def n_clips(video: SyntheticVideo, clip_len: int) -> int:
    return max(video.length, clip_len) - clip_len + 1


def padded_profile(video: SyntheticVideo, clip_len: int) -> np.ndarray:
    r = video.profile.values
    if video.length >= clip_len:
        return r
    return np.concatenate([r, np.full(clip_len - video.length, r[-1])])


def clip_relevance(video: SyntheticVideo, clip_len: int) -> np.ndarray:
    """Mean relevance of every clip position, shape ``(N,)``."""
    r = padded_profile(video, clip_len)
    c = np.concatenate([[0.0], np.cumsum(r)])
    return np.clip((c[clip_len:] - c[:-clip_len]) / clip_len, 0.0, 1.0)


def _check_position(video, t, clip_len):
    n = n_clips(video, clip_len)
    if not 0 <= t < n:
        raise ValueError(f"clip position {t} out of range [0, {n - 1}]")


def mean_relevance(video: SyntheticVideo, t: int, clip_len: int) -> float:
    _check_position(video, t, clip_len)
    r = padded_profile(video, clip_len)
    return float(np.clip(r[t:t + clip_len].mean(), 0.0, 1.0))


def clip_noise(video: SyntheticVideo, clip_len: int) -> np.ndarray:
    """Noise for every clip position, shape ``(N, d)``, marginal std noise_sigma."""
    rng = substream(video.seed, "noise", video.video_id)
    d = video.feature_dim
    shared = rng.standard_normal(d)
    frames = rng.standard_normal((max(video.length, clip_len), d))
    c = np.concatenate([np.zeros((1, d)), np.cumsum(frames, axis=0)])
    local = (c[clip_len:] - c[:-clip_len]) / np.sqrt(clip_len)
    rho = video.shared_noise
    return video.noise_sigma * (np.sqrt(rho) * shared + np.sqrt(1.0 - rho) * local)


def clip_feature_matrix(video: SyntheticVideo, clip_len: int) -> np.ndarray:
    """Features of every clip position, shape ``(N, d)``."""
    protos = prototypes(video.n_classes, video.feature_dim, video.prototype_scale)
    r = clip_relevance(video, clip_len)[:, None]
    base = r * protos[video.label] + (1.0 - r) * protos[-1]
    if video.noise_sigma == 0:
        return base
    return base + clip_noise(video, clip_len)


def clip_features(video: SyntheticVideo, t: int, clip_len: int) -> np.ndarray:
    _check_position(video, t, clip_len)
    return clip_feature_matrix(video, clip_len)[t]


# -- dataset generation -----------------------------------------------------

@dataclass
class DatasetParams:
    n_videos: int = 800
    n_classes: int = 4
    min_len: int = 24
    max_len: int = 128
    feature_dim: int = 16
    seed: int = 0
    occlusion_rate: float = 0.2
    non_reactor_rate: float = 0.1
    noise_sigma: float = 0.5
    shared_noise: float = 0.0
    prototype_scale: float = 3.0
    train_fraction: float = 0.5
    val_fraction: float = 0.25

    def validate(self):
        if self.n_videos < 3 * self.n_classes:
            raise ValueError(f"n_videos={self.n_videos} too small: need at least 3 per class per split")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.feature_dim < self.n_classes + 1:
            raise ValueError("feature_dim must exceed n_classes")
        for name in ("occlusion_rate", "non_reactor_rate", "shared_noise"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not (0 < self.train_fraction and 0 < self.val_fraction
                and self.train_fraction + self.val_fraction < 1):
            raise ValueError("split fractions must leave room for all three splits")


@dataclass
class Dataset:
    params: DatasetParams
    train: list
    val: list
    test: list

    def all_videos(self):
        return self.train + self.val + self.test

    def split_of(self, video_id: str) -> str:
        for name in ("train", "val", "test"):
            if any(v.video_id == video_id for v in getattr(self, name)):
                return name
        raise KeyError(video_id)


def make_profile(length: int, rng: np.random.Generator, amplitude: float = 1.0,
                 occluded: bool = False) -> RelevanceProfile:
    onset = int(rng.integers(RAMP_RANGE[0], RAMP_RANGE[1] + 1))
    offset = int(rng.integers(RAMP_RANGE[0], RAMP_RANGE[1] + 1))
    plateau = int(rng.integers(PLATEAU_RANGE[0], PLATEAU_RANGE[1] + 1))
    # uniform over every placement that keeps at least one apex frame visible;
    # ramps and plateau are cut at the video boundaries
    start = int(rng.integers(1 - plateau, length))
    frames = np.arange(length)
    r = np.zeros(length)
    stop = start + plateau
    r[(frames >= start) & (frames < stop)] = amplitude
    before = (frames < start) & (frames >= start - onset)
    r[before] = amplitude * (1.0 - (start - frames[before]) / (onset + 1))
    after = (frames >= stop) & (frames < stop + offset)
    r[after] = amplitude * (1.0 - (frames[after] - stop + 1) / (offset + 1))

    occlusions = []
    if occluded:
        # hide part of the expression: centre the window inside the support
        support = np.nonzero(r > 0)[0]
        width = int(rng.integers(OCCLUSION_RANGE[0], OCCLUSION_RANGE[1] + 1))
        centre = int(rng.integers(support[0], support[-1] + 1))
        lo, hi = max(0, centre - width // 2), min(length, centre - width // 2 + width)
        # never erase the whole visible apex
        a_lo, a_hi = max(start, 0), min(stop, length)
        if lo <= a_lo and hi >= a_hi:
            if a_lo - lo > hi - a_hi:
                hi = max(lo, a_lo)
            else:
                lo = min(hi, a_hi)
        if hi > lo:
            r[lo:hi] = 0.0
            occlusions.append([lo, hi])
    return RelevanceProfile(r, start, plateau, onset, offset, amplitude, occlusions)


def _stratified_labels(p: DatasetParams, rng):
    per_class = [p.n_videos // p.n_classes + (1 if c < p.n_videos % p.n_classes else 0)
                 for c in range(p.n_classes)]
    splits = {"train": [], "val": [], "test": []}
    for c, n_c in enumerate(per_class):
        n_train = int(round(n_c * p.train_fraction))
        n_val = int(round(n_c * p.val_fraction))
        if n_train < 1 or n_val < 1 or n_c - n_train - n_val < 1:
            raise ValueError(f"class {c} has too few videos ({n_c}) for three splits")
        splits["train"] += [c] * n_train
        splits["val"] += [c] * n_val
        splits["test"] += [c] * (n_c - n_train - n_val)
    out = []
    for name in ("train", "val", "test"):
        labels = np.array(splits[name])
        rng.shuffle(labels)
        out += [(name, int(y)) for y in labels]
    return out


def generate_dataset(params: Optional[DatasetParams] = None, **overrides) -> Dataset:
    p = params if params is not None else DatasetParams()
    if overrides:
        p = DatasetParams(**{**asdict(p), **overrides})
    p.validate()
    rng = substream(p.seed, "dataset")
    assignments = _stratified_labels(p, rng)
    n = len(assignments)
    occluded = set(rng.permutation(n)[:int(round(p.occlusion_rate * n))].tolist())
    non_reactors = set(rng.permutation(n)[:int(round(p.non_reactor_rate * n))].tolist())
    ds = Dataset(p, [], [], [])
    for i, (split, label) in enumerate(assignments):
        vrng = substream(p.seed, "dataset", "video", i)
        length = int(vrng.integers(p.min_len, p.max_len + 1))
        amplitude = NON_REACTOR_AMPLITUDE if i in non_reactors else 1.0
        profile = make_profile(length, vrng, amplitude, occluded=i in occluded)
        video = SyntheticVideo(
            video_id=f"v{i:05d}", label=label, length=length, profile=profile,
            n_classes=p.n_classes, feature_dim=p.feature_dim, noise_sigma=p.noise_sigma,
            shared_noise=p.shared_noise, prototype_scale=p.prototype_scale, seed=p.seed,
            non_reactor=i in non_reactors,
        )
        getattr(ds, split).append(video)
    return ds


# -- on-disk format: metadata.json + profiles/<video_id>.csv -----------------

def _video_meta(video: SyntheticVideo, split: str) -> dict:
    pr = video.profile
    return {
        "video_id": video.video_id, "split": split, "label": video.label,
        "length": video.length, "non_reactor": video.non_reactor,
        "plateau_start": pr.plateau_start, "plateau_len": pr.plateau_len,
        "onset_len": pr.onset_len, "offset_len": pr.offset_len,
        "amplitude": pr.amplitude, "occlusions": pr.occlusions,
    }


def export_dataset(ds: Dataset, out_dir) -> None:
    os.makedirs(os.path.join(out_dir, "profiles"), exist_ok=True)
    meta = {"params": asdict(ds.params), "videos": []}
    for split in ("train", "val", "test"):
        for v in getattr(ds, split):
            meta["videos"].append(_video_meta(v, split))
            with open(os.path.join(out_dir, "profiles", f"{v.video_id}.csv"), "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["frame", "relevance"])
                w.writerows([f, repr(float(x))] for f, x in enumerate(v.profile.values))
    with open(os.path.join(out_dir, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    with open(os.path.join(path, "metadata.json")) as fh:
        meta = json.load(fh)
    known = {f.name for f in fields(DatasetParams)}
    p = DatasetParams(**{k: v for k, v in meta["params"].items() if k in known})
    ds = Dataset(p, [], [], [])
    for m in meta["videos"]:
        with open(os.path.join(path, "profiles", f"{m['video_id']}.csv")) as fh:
            rows = list(csv.reader(fh))[1:]
        profile = RelevanceProfile(
            [float(r[1]) for r in rows], m["plateau_start"], m["plateau_len"],
            m["onset_len"], m["offset_len"], m["amplitude"], m["occlusions"],
        )
        video = SyntheticVideo(
            video_id=m["video_id"], label=m["label"], length=m["length"], profile=profile,
            n_classes=p.n_classes, feature_dim=p.feature_dim, noise_sigma=p.noise_sigma,
            shared_noise=p.shared_noise, prototype_scale=p.prototype_scale, seed=p.seed,
            non_reactor=m["non_reactor"],
        )
        getattr(ds, m["split"]).append(video)
    return ds


def occluded_clip_mask(video: SyntheticVideo, clip_len: int) -> np.ndarray:
    """True for clip positions whose centre frame lies in an occlusion window."""
    n = n_clips(video, clip_len)
    centre = np.arange(n) + clip_len // 2
    mask = np.zeros(n, dtype=bool)
    for lo, hi in video.profile.occlusions:
        mask |= (centre >= lo) & (centre < hi)
    return mask
