"""Per-video score tracks and stochastic softmax clip sampling.

Each training video owns a :class:`ScoreTrack`: running estimates of the
target-class logit for every clip position.  Clip positions are drawn from
the softmax of those estimates, and every observation is propagated to the
neighbouring positions with a triangular (linear interpolation) kernel.
Training goes through three phases: uniform warm-up with frozen tracks,
deterministic exploration that fills the track segment by segment, and
softmax exploitation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np


@dataclass
class SamplerConfig:
    clip_len: int = 16
    gamma_sample: float = 1.0
    gamma_pool: float = 1.0
    warmup_epochs: int = 3
    exploration_epochs: int = 5
    propagation_radius: Optional[int] = None  # None -> clip_len
    seed: int = 0

    def __post_init__(self):
        if self.clip_len < 1:
            raise ValueError(f"clip_len must be >= 1, got {self.clip_len}")
        if not (self.gamma_sample >= 0 and self.gamma_pool >= 0):
            raise ValueError("temperatures must be nonnegative")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if self.exploration_epochs < 1:
            raise ValueError("exploration_epochs must be >= 1")
        if self.propagation_radius is None:
            self.propagation_radius = self.clip_len
        if self.propagation_radius < 1:
            raise ValueError("propagation_radius must be >= 1")


class PhaseKind(enum.Enum):
    WARMUP = "warmup"
    EXPLORATION = "exploration"
    EXPLOITATION = "exploitation"


@dataclass(frozen=True)
class Phase:
    kind: PhaseKind
    step: int = 0  # exploration step k, only meaningful during exploration

    @property
    def updates_track(self) -> bool:
        return self.kind is not PhaseKind.WARMUP


def phase_for_epoch(epoch: int, config: SamplerConfig) -> Phase:
    if epoch < config.warmup_epochs:
        return Phase(PhaseKind.WARMUP)
    k = epoch - config.warmup_epochs
    if k < config.exploration_epochs:
        return Phase(PhaseKind.EXPLORATION, k)
    return Phase(PhaseKind.EXPLOITATION)


@dataclass
class ScoreTrack:
    """Running clip-score estimates (logit units) for one video.

    All-zero scores are the canonical uniform distribution.
    """

    video_id: str
    scores: np.ndarray
    last_sampled: Optional[int] = None

    def __post_init__(self):
        self.scores = np.array(self.scores, dtype=np.float64).reshape(-1)
        self.validate()

    @classmethod
    def uniform(cls, video_id: str, n_clips: int) -> "ScoreTrack":
        if n_clips < 1:
            raise ValueError("n_clips must be positive")
        return cls(video_id, np.zeros(n_clips))

    @property
    def n_clips(self) -> int:
        return self.scores.shape[0]

    def validate(self):
        if self.scores.shape[0] < 1:
            raise ValueError("empty track")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("non-finite score")
        if self.last_sampled is not None and not 0 <= self.last_sampled < self.n_clips:
            raise ValueError("position out of range")

    def copy(self) -> "ScoreTrack":
        return ScoreTrack(self.video_id, self.scores.copy(), self.last_sampled)


def softmax_weights(scores, gamma: float) -> np.ndarray:
    """Softmax of ``gamma * scores`` with max subtraction."""
    w = np.asarray(scores, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise ValueError("empty track")
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite score")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    # gamma * (w - max) == gamma*w - gamma*max, but keeps shifts exact
    e = np.exp(gamma * (w - w.max()))
    return e / e.sum()


def draw_positions(weights: np.ndarray, rng: np.random.Generator, size: Optional[int] = None):
    """Inverse-CDF draws from a probability vector.

    Returns an int for ``size=None``, otherwise an int array.
    """
    cdf = np.cumsum(weights)
    u = rng.random(size) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, len(weights) - 1)
    return int(idx) if size is None else idx


def exploration_position(k: int, n_clips: int, n_steps: int) -> int:
    """Midpoint of the k-th of ``n_steps`` equal segments."""
    if n_steps > n_clips:
        # more steps than positions: walk the positions, then park on the last
        return min(k, n_clips - 1)
    return int(math.floor((k + 0.5) * n_clips / n_steps))


def exploration_segment(k: int, n_clips: int, n_steps: int) -> tuple[int, int]:
    """Inclusive bounds ``(lo, hi)`` of the segment probed at step k."""
    if n_steps > n_clips:
        t = min(k, n_clips - 1)
        return t, t
    lo = (k * n_clips) // n_steps
    hi = ((k + 1) * n_clips) // n_steps - 1
    return lo, hi


def sample_clip(track: ScoreTrack, phase: Phase, config: SamplerConfig,
                rng: np.random.Generator) -> int:
    n = track.n_clips
    if phase.kind is PhaseKind.WARMUP:
        t = int(rng.integers(n))
    elif phase.kind is PhaseKind.EXPLORATION:
        t = exploration_position(phase.step, n, config.exploration_epochs)
    else:
        t = draw_positions(softmax_weights(track.scores, config.gamma_sample), rng)
    track.last_sampled = t
    return t


def update_track(track: ScoreTrack, t: int, observed_score: float, radius: int) -> ScoreTrack:
    """Pull positions within ``radius`` of t toward the observed score.

    Weight is 1 at t and falls linearly to 0 at distance ``radius``.
    """
    n = track.n_clips
    if not 0 <= t < n:
        raise ValueError("position out of range")
    if not math.isfinite(observed_score):
        raise ValueError("non-finite score")
    if radius < 1:
        raise ValueError("radius must be >= 1")
    lo, hi = max(0, t - radius), min(n - 1, t + radius)
    offsets = np.arange(lo, hi + 1) - t
    weight = (radius - np.abs(offsets)) / radius
    w = track.scores[lo:hi + 1]
    track.scores[lo:hi + 1] = w + weight * (observed_score - w)
    return track


def initialize_segment(track: ScoreTrack, k: int, n_steps: int, observed_score: float) -> ScoreTrack:
    if not 0 <= k < n_steps:
        raise ValueError(f"exploration step {k} outside [0, {n_steps})")
    if not math.isfinite(observed_score):
        raise ValueError("non-finite score")
    lo, hi = exploration_segment(k, track.n_clips, n_steps)
    track.scores[lo:hi + 1] = observed_score
    return track


def sample_from_external(profile, gamma: float, rng: np.random.Generator) -> int:
    """Draw a position from an externally supplied relevance profile."""
    return draw_positions(softmax_weights(profile, gamma), rng)


# -- text serialization: video_id,epoch,score_0,...,score_{N-1} --------------

def format_track(track: ScoreTrack, epoch: int) -> str:
    if "," in track.video_id:
        raise ValueError("video_id must not contain commas")
    return ",".join([track.video_id, str(int(epoch))] + [repr(float(s)) for s in track.scores])


def parse_track(line: str) -> tuple[ScoreTrack, int]:
    parts = line.strip().split(",")
    if len(parts) < 3:
        raise ValueError(f"malformed track line: {line!r}")
    return ScoreTrack(parts[0], [float(s) for s in parts[2:]]), int(parts[1])


def write_tracks(path, tracks: Iterable[ScoreTrack], epoch: int):
    with open(path, "w") as fh:
        for track in tracks:
            fh.write(format_track(track, epoch) + "\n")


def read_tracks(path) -> list[tuple[ScoreTrack, int]]:
    with open(path) as fh:
        return [parse_track(line) for line in fh if line.strip()]
