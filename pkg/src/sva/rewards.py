"""Reward terms scored on a frame selection and the attack outcome.

Representativeness rewards selections close (in pixel L2) to every frame of
the clip; diversity rewards mutually dissimilar selections (mean pairwise
cosine distance over ordered pairs); the attack term converts query count and
mean perturbation into a scalar with a hard -1 once the query budget is blown.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

QUERY_SOFT_LIMIT = 15000
QUERY_HARD_LIMIT = 30000
PERTURBATION_SCALE = 0.05
SOFT_FACTOR = 0.999


@dataclass(frozen=True)
class RewardWeights:
    diversity: float = 1.0
    representativeness: float = 2.0
    attack: float = 3.0


@dataclass(frozen=True)
class AttackFeedback:
    queries: int
    mean_perturbation: float

    def __post_init__(self) -> None:
        if self.queries < 0:
            raise ValueError("queries must be non-negative")
        if self.mean_perturbation < 0:
            raise ValueError("mean_perturbation must be non-negative")


def dissimilarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine distance 1 - cos(a, b); defined as 1.0 if either norm is 0."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 1.0
    return float(1.0 - np.dot(a, b) / (na * nb))


def _check_selection(features: np.ndarray, selected: Sequence[int]) -> np.ndarray:
    sel = np.asarray(selected, dtype=np.int64)
    if sel.size == 0:
        raise ValueError("empty frame selection")
    if sel.min() < 0 or sel.max() >= features.shape[0]:
        raise ValueError("selected index out of range")
    if len(np.unique(sel)) != sel.size:
        raise ValueError("duplicate selected index")
    return sel


def reward_representative(features: np.ndarray, selected: Sequence[int]) -> float:
    """exp(-mean over frames of distance to the nearest selected frame)."""
    feats = np.asarray(features, dtype=np.float64)
    sel = _check_selection(feats, selected)
    diffs = feats[:, None, :] - feats[None, sel, :]
    nearest = np.linalg.norm(diffs, axis=2).min(axis=1)
    return float(np.exp(-nearest.mean()))


def reward_diversity(features: np.ndarray, selected: Sequence[int]) -> float:
    """Mean pairwise dissimilarity over ordered pairs; 0 for singletons."""
    feats = np.asarray(features, dtype=np.float64)
    sel = _check_selection(feats, selected)
    if sel.size < 2:
        return 0.0
    total = 0.0
    for i in sel:
        for j in sel:
            if i != j:
                total += dissimilarity(feats[i], feats[j])
    return total / (sel.size * (sel.size - 1))


def reward_attack(feedback: AttackFeedback) -> float:
    """Query/perturbation score with a soft penalty band and a hard cutoff."""
    if feedback.queries > QUERY_HARD_LIMIT:
        return -1.0
    base = float(np.exp(-feedback.mean_perturbation / PERTURBATION_SCALE))
    if feedback.queries > QUERY_SOFT_LIMIT:
        return SOFT_FACTOR * base
    return base


def combined_reward(diversity: float, representativeness: float, attack: float,
                    weights: RewardWeights | None = None) -> float:
    w = weights or RewardWeights()
    return (w.diversity * diversity
            + w.representativeness * representativeness
            + w.attack * attack)


def sparsity_penalty(probs: np.ndarray, target_sparsity: float) -> float:
    """|mean(p) + S - 1|: zero when expected selection density hits 1 - S."""
    p = np.asarray(probs, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty probability vector")
    if not 0.0 <= target_sparsity <= 1.0:
        raise ValueError("target sparsity must lie in [0, 1]")
    return float(abs(p.mean() + target_sparsity - 1.0))
