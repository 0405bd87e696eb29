"""Shared fixtures: synthetic datasets and trained threat models.

Training is the slow part, so models are session-scoped and the configs
are pinned here; every suite that needs a real classifier reuses them.
"""

from __future__ import annotations

import numpy as np
import pytest

from sva.threatmodel import (
    FRAME_RECURRENT,
    TEMPORAL_CONV,
    ClassifierParams,
    QueryOracle,
    TrainConfig,
    forward,
    init_params,
    train,
)
from sva.videodata import GenParams, generate_dataset

CONV_TRAIN_SEED = 101
CONV_TRAIN_PER_CLASS = 16
CONV_CONFIG = TrainConfig(epochs=40, batch_size=8, learning_rate=1.5, seed=3)

RNN_TRAIN_SEED = 101
RNN_TRAIN_PER_CLASS = 64
RNN_CONFIG = TrainConfig(epochs=20, batch_size=8, learning_rate=0.1, seed=3)

HELD_SEED = 202
HELD_PER_CLASS = 10

# Attack-experiment fixture: high background noise keeps class evidence within
# the L-inf ball, so a well-trained model is actually attackable; small
# geometry keeps query batches cheap.
ATTACK_GP = GenParams(frames=8, height=16, width=16, square_side=4, speed=1,
                      class_count=4, noise=0.70)
ATTACK_TRAIN_SEED = 101
ATTACK_TRAIN_PER_CLASS = 32
ATTACK_TRAIN_CONFIG = TrainConfig(epochs=200, batch_size=16, learning_rate=0.2,
                                  seed=3)
ATTACK_HELD_SEED = 202
ATTACK_HELD_PER_CLASS = 8


@pytest.fixture(scope="session")
def conv_train_dataset():
    return generate_dataset(CONV_TRAIN_SEED, CONV_TRAIN_PER_CLASS)


@pytest.fixture(scope="session")
def held_dataset():
    return generate_dataset(HELD_SEED, HELD_PER_CLASS)


@pytest.fixture(scope="session")
def conv_model(conv_train_dataset) -> ClassifierParams:
    return train(conv_train_dataset, TEMPORAL_CONV, CONV_CONFIG)


@pytest.fixture(scope="session")
def rnn_model() -> ClassifierParams:
    dataset = generate_dataset(RNN_TRAIN_SEED, RNN_TRAIN_PER_CLASS)
    return train(dataset, FRAME_RECURRENT, RNN_CONFIG)


@pytest.fixture(scope="session")
def attack_model() -> ClassifierParams:
    dataset = generate_dataset(ATTACK_TRAIN_SEED, ATTACK_TRAIN_PER_CLASS,
                               ATTACK_GP)
    return train(dataset, TEMPORAL_CONV, ATTACK_TRAIN_CONFIG)


@pytest.fixture(scope="session")
def attack_held():
    return generate_dataset(ATTACK_HELD_SEED, ATTACK_HELD_PER_CLASS, ATTACK_GP)


@pytest.fixture(scope="session")
def eligible_held(conv_model, held_dataset):
    """Held-out items the trained conv model classifies correctly."""
    items = [item for item in held_dataset.items
             if int(np.argmax(forward(conv_model, item.video))) == item.label]
    assert items, "trained model classifies nothing correctly"
    return items


def constant_classifier(favored: int, class_count: int = 4,
                        frame_shape: tuple[int, int, int, int] = (16, 32, 32, 1),
                        hidden: int = 4) -> ClassifierParams:
    """Zero-weight recurrent model with a bias toward one class: predicts
    (favored, softmax-of-bias) for every input. Useful as a stub oracle."""
    params = init_params(FRAME_RECURRENT, class_count, frame_shape, hidden=hidden)
    weights = {key: np.zeros_like(value) for key, value in params.weights.items()}
    weights["out_b"][favored] = 1.0
    return ClassifierParams(params.arch, params.class_count, weights)


class AuditOracle(QueryOracle):
    """Query oracle that double-counts every prediction independently, so
    tests can check reported query totals against actual call counts."""

    def __init__(self, params: ClassifierParams):
        super().__init__(params)
        self.audit = 0

    def predict(self, video):
        self.audit += 1
        return super().predict(video)
