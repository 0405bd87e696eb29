"""Reward terms: frozen worked examples, ranges, and monotonicity."""

from __future__ import annotations

import math

import numpy as np
import pytest

from sva.rewards import (
    AttackFeedback,
    RewardWeights,
    combined_reward,
    dissimilarity,
    reward_attack,
    reward_diversity,
    reward_representative,
    sparsity_penalty,
)


def _basis(i, dim=4):
    e = np.zeros(dim)
    e[i] = 1.0
    return e


# -- cosine dissimilarity ----------------------------------------------------

def test_dissimilarity_of_vector_with_itself_is_zero():
    v = np.array([0.3, -1.2, 4.0])
    assert dissimilarity(v, v) == pytest.approx(0.0, abs=1e-12)


def test_dissimilarity_of_orthogonal_unit_vectors_is_one():
    assert dissimilarity(_basis(0), _basis(1)) == pytest.approx(1.0, abs=1e-12)


def test_dissimilarity_of_opposite_vectors_is_two():
    v = np.array([1.0, 2.0, -0.5])
    assert dissimilarity(v, -v) == pytest.approx(2.0, abs=1e-12)


def test_dissimilarity_with_zero_vector_is_one():
    assert dissimilarity(np.zeros(3), np.ones(3)) == 1.0
    assert dissimilarity(np.ones(3), np.zeros(3)) == 1.0


# -- representativeness ------------------------------------------------------

def test_representativeness_of_full_selection_is_one():
    feats = np.random.default_rng(0).random((6, 5))
    assert reward_representative(feats, list(range(6))) == pytest.approx(1.0)


def test_representativeness_identical_frames_is_one():
    feats = np.ones((5, 3))
    assert reward_representative(feats, [2]) == pytest.approx(1.0)


def test_representativeness_basis_vector_example():
    # Frames e1..e4; selecting frame 0 leaves three frames at distance
    # sqrt(2), so the reward is exp(-3*sqrt(2)/4).
    feats = np.stack([_basis(i) for i in range(4)])
    expected = math.exp(-3.0 * math.sqrt(2.0) / 4.0)
    assert reward_representative(feats, [0]) == pytest.approx(expected, abs=1e-12)


def test_representativeness_grows_with_selection():
    rng = np.random.default_rng(1)
    for trial in range(20):
        feats = rng.random((10, 7))
        order = rng.permutation(10)
        prev = reward_representative(feats, order[:1])
        for k in range(2, 11):
            cur = reward_representative(feats, order[:k])
            assert cur >= prev - 1e-12
            prev = cur


def test_selection_validation_errors():
    feats = np.ones((4, 2))
    with pytest.raises(ValueError):
        reward_representative(feats, [])
    with pytest.raises(ValueError):
        reward_representative(feats, [4])
    with pytest.raises(ValueError):
        reward_representative(feats, [-1])
    with pytest.raises(ValueError):
        reward_diversity(feats, [1, 1])


# -- diversity ---------------------------------------------------------------

def test_diversity_of_singleton_is_zero():
    feats = np.random.default_rng(2).random((5, 4))
    assert reward_diversity(feats, [3]) == 0.0


def test_diversity_of_orthogonal_pair_is_one():
    feats = np.stack([_basis(0), _basis(1)])
    assert reward_diversity(feats, [0, 1]) == pytest.approx(1.0, abs=1e-12)


def test_diversity_of_opposite_pair_is_two():
    feats = np.stack([np.array([1.0, 1.0]), np.array([-1.0, -1.0])])
    assert reward_diversity(feats, [0, 1]) == pytest.approx(2.0, abs=1e-12)


def test_diversity_stays_in_range():
    rng = np.random.default_rng(3)
    for trial in range(20):
        feats = rng.standard_normal((8, 6))
        sel = rng.permutation(8)[: rng.integers(2, 9)]
        value = reward_diversity(feats, sel)
        assert 0.0 <= value <= 2.0


def test_diversity_of_identical_frames_is_zero():
    feats = np.ones((4, 3))
    assert reward_diversity(feats, [0, 1, 2]) == pytest.approx(0.0, abs=1e-12)


# -- attack reward -----------------------------------------------------------

def test_attack_reward_zero_perturbation_fast_query_is_one():
    assert reward_attack(AttackFeedback(10_000, 0.0)) == pytest.approx(1.0)


def test_attack_reward_soft_band_example():
    # 20000 queries lands in the soft band: 0.999 * exp(-0.05/0.05).
    expected = 0.999 * math.exp(-1.0)
    assert reward_attack(AttackFeedback(20_000, 0.05)) == pytest.approx(expected, abs=1e-9)


def test_attack_reward_over_budget_is_minus_one():
    assert reward_attack(AttackFeedback(40_000, 0.01)) == -1.0
    assert reward_attack(AttackFeedback(30_001, 0.0)) == -1.0


def test_attack_reward_boundaries_use_lower_branch():
    # Exactly at the soft limit: full-strength branch.
    assert reward_attack(AttackFeedback(15_000, 0.1)) == pytest.approx(math.exp(-2.0))
    # Exactly at the hard limit: soft branch, not -1.
    assert reward_attack(AttackFeedback(30_000, 0.1)) == pytest.approx(0.999 * math.exp(-2.0))


def test_attack_reward_range():
    rng = np.random.default_rng(4)
    for trial in range(50):
        queries = int(rng.integers(0, 60_000))
        pert = float(rng.random() * 0.2)
        value = reward_attack(AttackFeedback(queries, pert))
        assert value == -1.0 or 0.0 < value <= 1.0


def test_attack_feedback_validation():
    with pytest.raises(ValueError):
        AttackFeedback(-1, 0.0)
    with pytest.raises(ValueError):
        AttackFeedback(0, -0.1)


# -- combination and sparsity penalty -----------------------------------------

def test_combined_reward_default_weights_example():
    # Defaults weight (diversity, representativeness, attack) as (1, 2, 3).
    assert combined_reward(1.0, 1.0, 1.0) == pytest.approx(6.0)


def test_combined_reward_attack_only_weights():
    weights = RewardWeights(diversity=0.0, representativeness=0.0, attack=1.0)
    assert combined_reward(0.7, 0.9, -1.0, weights) == pytest.approx(-1.0)


def test_sparsity_penalty_examples():
    assert sparsity_penalty(np.full(6, 0.5), 0.5) == pytest.approx(0.0, abs=1e-12)
    assert sparsity_penalty(np.ones(4), 1.0) == pytest.approx(1.0)
    assert sparsity_penalty(np.array([0.2, 0.4, 0.6, 0.8]), 0.3) == pytest.approx(0.2)


def test_sparsity_penalty_validation():
    with pytest.raises(ValueError):
        sparsity_penalty(np.array([]), 0.5)
    with pytest.raises(ValueError):
        sparsity_penalty(np.ones(3), 1.5)
