"""NES gradient estimator: probe structure, unbiased direction, exact
zero on constant objectives, and bit-level reproducibility."""

from __future__ import annotations

import numpy as np
import pytest

from sva._util import MASK64
from sva.nes import EstimationError, NesConfig, nes_gradient


def _cosine(a, b):
    return float(np.vdot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_config_rejects_bad_sample_counts_and_sigma():
    with pytest.raises(ValueError):
        NesConfig(samples=0)
    with pytest.raises(ValueError):
        NesConfig(samples=7)
    with pytest.raises(ValueError):
        NesConfig(sigma=0.0)
    with pytest.raises(ValueError):
        NesConfig(sigma=-1e-3)


def test_exactly_n_probes_in_antithetic_order():
    x = np.zeros(6)
    seen = []

    def objective(v):
        seen.append(v.copy())
        return 0.0

    config = NesConfig(samples=8, sigma=1.0, seed=3)
    nes_gradient(objective, x, config)
    assert len(seen) == 8
    # With x = 0 and sigma = 1 the probes are exactly the deltas, so the
    # second half must mirror the first half in reverse order, bit for bit.
    for i in range(4):
        assert np.array_equal(seen[i], -seen[8 - 1 - i])
    # First half are distinct Gaussian draws.
    assert not np.array_equal(seen[0], seen[1])


def test_probes_match_philox_stream():
    # The documented construction: standard normals from a Philox generator
    # keyed with the seed, probes x + sigma*delta then mirrored.
    x = np.full(5, 0.25)
    sigma = 0.01
    seed = 42
    seen = []
    nes_gradient(lambda v: (seen.append(v.copy()), 0.0)[1], x,
                 NesConfig(samples=6, sigma=sigma, seed=seed))
    rng = np.random.Generator(np.random.Philox(key=seed & MASK64))
    deltas = rng.standard_normal((3, 5))
    for i in range(3):
        assert np.array_equal(seen[i], x + sigma * deltas[i])
    for i in range(3, 6):
        assert np.array_equal(seen[i], x - sigma * deltas[6 - 1 - i])


def test_constant_objective_gives_exactly_zero():
    x = np.random.default_rng(0).random((4, 3))
    grad = nes_gradient(lambda v: 7.5, x, NesConfig(samples=48, sigma=1e-3, seed=1))
    assert grad.shape == x.shape
    assert np.all(grad == 0.0)


def test_linear_objective_recovers_direction():
    rng = np.random.default_rng(1)
    g = rng.standard_normal(32)
    x = rng.random(32)
    est = nes_gradient(lambda v: float(np.vdot(g, v)), x,
                       NesConfig(samples=4096, sigma=1e-3, seed=2))
    assert _cosine(est, g) > 0.95


def test_quadratic_objective_recovers_direction():
    rng = np.random.default_rng(3)
    c = rng.random(64)
    x = rng.random(64)
    true_grad = -2.0 * (x - c)

    def objective(v):
        return float(-np.sum((v - c) ** 2))

    for seed in (0, 1):
        est = nes_gradient(objective, x, NesConfig(samples=4096, sigma=1e-3, seed=seed))
        assert _cosine(est, true_grad) > 0.9


def test_same_seed_is_bitwise_reproducible():
    rng = np.random.default_rng(4)
    g = rng.standard_normal(10)
    x = rng.random(10)
    config = NesConfig(samples=16, sigma=1e-2, seed=11)
    a = nes_gradient(lambda v: float(np.vdot(g, v)), x, config)
    b = nes_gradient(lambda v: float(np.vdot(g, v)), x, config)
    assert np.array_equal(a, b)


def test_different_seeds_give_different_estimates():
    rng = np.random.default_rng(5)
    g = rng.standard_normal(10)
    x = rng.random(10)
    a = nes_gradient(lambda v: float(np.vdot(g, v)), x, NesConfig(samples=16, seed=1))
    b = nes_gradient(lambda v: float(np.vdot(g, v)), x, NesConfig(samples=16, seed=2))
    assert not np.array_equal(a, b)


def test_doubling_the_objective_exactly_doubles_the_estimate():
    rng = np.random.default_rng(6)
    g = rng.standard_normal(12)
    x = rng.random(12)
    config = NesConfig(samples=32, sigma=1e-2, seed=7)
    one = nes_gradient(lambda v: float(np.vdot(g, v)), x, config)
    two = nes_gradient(lambda v: 2.0 * float(np.vdot(g, v)), x, config)
    assert np.array_equal(two, 2.0 * one)


def test_non_finite_objective_raises():
    x = np.zeros(4)
    with pytest.raises(EstimationError):
        nes_gradient(lambda v: float("nan"), x, NesConfig(samples=4, seed=0))
    with pytest.raises(EstimationError):
        nes_gradient(lambda v: float("inf"), x, NesConfig(samples=4, seed=0))


def test_estimate_keeps_input_shape():
    x = np.zeros((3, 4, 2, 1))
    grad = nes_gradient(lambda v: float(v.sum()), x, NesConfig(samples=8, seed=0))
    assert grad.shape == x.shape
