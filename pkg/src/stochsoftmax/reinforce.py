"""Score-function (REINFORCE) estimation of a per-video sampling distribution.

This is the high-variance baseline: the sampling distribution is
``softmax(theta)`` and theta follows the likelihood-ratio gradient of the
expected reward, with a running-mean baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .sampler import (
    ScoreTrack,
    draw_positions,
    exploration_position,
    initialize_segment,
    softmax_weights,
    update_track,
)


@dataclass
class ReinforceTrack:
    theta: np.ndarray
    baseline: float = 0.0
    step_size: float = 0.1
    baseline_rate: float = 0.05

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if self.theta.size == 0:
            raise ValueError("empty track")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")

    @classmethod
    def uniform(cls, n_clips: int, **kwargs) -> "ReinforceTrack":
        return cls(np.zeros(n_clips), **kwargs)

    @property
    def n_clips(self) -> int:
        return self.theta.shape[0]

    def distribution(self) -> np.ndarray:
        return softmax_weights(self.theta, 1.0)


def score_direction(q: np.ndarray, t: int) -> np.ndarray:
    """Gradient of log q_t with respect to the logits: e_t - q."""
    g = -q.copy()
    g[t] += 1.0
    return g


def reinforce_step(track: ReinforceTrack, t: int, reward: float) -> ReinforceTrack:
    if not 0 <= t < track.n_clips:
        raise ValueError("position out of range")
    if not math.isfinite(reward):
        raise ValueError("non-finite reward")
    q = track.distribution()
    advantage = reward - track.baseline
    track.theta = track.theta + track.step_size * advantage * score_direction(q, t)
    track.baseline += track.baseline_rate * (reward - track.baseline)
    return track


def expected_gradient_oracle(rewards, q, baseline: float = 0.0) -> np.ndarray:
    """Exact expectation of ``(r_t - b) * (e_t - q)`` for ``t ~ q``."""
    r = np.asarray(rewards, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    out = np.zeros_like(q)
    for t in range(q.size):
        out += q[t] * (r[t] - baseline) * score_direction(q, t)
    return out


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) for strictly positive q."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def bandit_scores(n_arms: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth fixed score profile: one random bump over a flat background."""
    centre = rng.uniform(0.2, 0.8) * (n_arms - 1)
    width = rng.uniform(0.05, 0.15) * n_arms
    height = rng.uniform(2.0, 4.0)
    t = np.arange(n_arms)
    return height * np.exp(-0.5 * ((t - centre) / width) ** 2)


def estimate_with_score_track(scores: np.ndarray, gamma: float, budget: int, radius: int,
                              rng: np.random.Generator, noise: float = 0.0,
                              exploration_steps: int = 5) -> np.ndarray:
    """Estimate softmax(gamma * scores) from ``budget`` single-arm evaluations.

    Uses the score-track recipe: evenly spaced probes that fill the track
    segment by segment, then softmax sampling with interpolated updates.
    """
    n = scores.shape[0]
    track = ScoreTrack.uniform("bandit", n)
    k_steps = min(exploration_steps, budget)
    for k in range(k_steps):
        t = exploration_position(k, n, k_steps)
        initialize_segment(track, k, k_steps, scores[t] + noise * rng.standard_normal())
    for _ in range(budget - k_steps):
        t = draw_positions(softmax_weights(track.scores, gamma), rng)
        update_track(track, t, scores[t] + noise * rng.standard_normal(), radius)
    return softmax_weights(track.scores, gamma)


def estimate_with_reinforce(scores: np.ndarray, gamma: float, budget: int,
                            rng: np.random.Generator, noise: float = 0.0,
                            step_size: float = 0.1, baseline_rate: float = 0.05,
                            init_baseline: Optional[float] = None) -> np.ndarray:
    """Estimate the sampling distribution by REINFORCE with reward ``gamma * score``."""
    track = ReinforceTrack.uniform(scores.shape[0], step_size=step_size, baseline_rate=baseline_rate)
    if init_baseline is not None:
        track.baseline = init_baseline
    for _ in range(budget):
        t = draw_positions(track.distribution(), rng)
        reinforce_step(track, t, gamma * (scores[t] + noise * rng.standard_normal()))
    return track.distribution()
