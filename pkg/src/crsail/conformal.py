"""Conformal calibration of the novelty threshold.

Rolls out the frozen initial policy, scores the visited states against the
initial expert dataset, and sets the threshold R as the finite-sample
(1 - alpha) quantile: the m-th order statistic with
m = ceil((N_cal + 1)(1 - alpha)). Calibration happens once; the threshold is
never recomputed during training unless explicitly requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from crsail.core import rollout
from crsail.dataset import ExpertDataset
from crsail.exceptions import ConfigurationError, InfeasibleCalibrationError
from crsail.novelty import NoveltyConfig, score_batch


@dataclass
class CalibrationSet:
    """Multiset of on-policy states visited by the frozen initial policy."""

    states: np.ndarray
    episode_lengths: list[int]

    @property
    def n_cal(self) -> int:
        return len(self.states)


@dataclass
class CalibratedThreshold:
    radius: float
    alpha: float
    m: int
    n_cal: int

    def as_dict(self) -> dict:
        return {"radius": self.radius, "alpha": self.alpha, "m": self.m, "n_cal": self.n_cal}


def collect_calibration(env, policy, m_cal: int, seed) -> CalibrationSet:
    """Visited non-final states of m_cal seeded rollouts; no expert labels."""
    if m_cal < 1:
        raise ConfigurationError("m_cal must be >= 1")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    chunks = []
    lengths = []
    for child in seed.spawn(m_cal):
        traj = rollout(env, policy, child)
        chunks.append(traj.states[:-1])
        lengths.append(traj.length)
    return CalibrationSet(states=np.concatenate(chunks), episode_lengths=lengths)


def quantile_index(n: int, alpha: float) -> int:
    """m = ceil((n + 1)(1 - alpha)), computed in exact decimal arithmetic."""
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError("alpha must lie in (0, 1)")
    return math.ceil((n + 1) * (1 - Fraction(str(alpha))))


def conformal_quantile(scores, alpha: float) -> CalibratedThreshold:
    """The m-th smallest calibration score; always an element of the list."""
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    if n == 0:
        raise ConfigurationError("score list must be non-empty")
    m = quantile_index(n, alpha)
    if m > n:
        raise InfeasibleCalibrationError(
            f"quantile index m={m} exceeds N_cal={n}; collect more calibration "
            f"episodes or raise alpha"
        )
    radius = float(np.sort(scores)[m - 1])
    return CalibratedThreshold(radius=radius, alpha=alpha, m=m, n_cal=n)


def calibrate_radius(env, policy, dataset: ExpertDataset, config: NoveltyConfig,
                     alpha: float, m_cal: int, seed) -> CalibratedThreshold:
    """End-to-end radius calibration against the initial expert dataset."""
    if len(dataset) < config.k:
        raise ConfigurationError(
            f"initial dataset of size {len(dataset)} is smaller than K={config.k}"
        )
    cal = collect_calibration(env, policy, m_cal, seed)
    scores = score_batch(cal.states, dataset, config)
    return conformal_quantile(scores, alpha)
