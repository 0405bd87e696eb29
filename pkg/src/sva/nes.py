"""Antithetic natural-evolution-strategies gradient estimation.

The estimator probes the objective at x + sigma*delta for n Gaussian draws
where the second half mirrors the first (delta_j = -delta_{n-1-j}), then
averages delta_i * f_i / (sigma * n). Mirrored pairs are reduced together so a
constant objective produces an exactly zero estimate. Exactly n objective
evaluations per call, made in index order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

SIGMA_TARGETED = 1e-6
SIGMA_UNTARGETED = 1e-3

MASK64 = (1 << 64) - 1


class EstimationError(RuntimeError):
    """Objective returned a non-finite value during estimation."""


@dataclass(frozen=True)
class NesConfig:
    samples: int = 48
    sigma: float = SIGMA_UNTARGETED
    seed: int = 0

    def __post_init__(self) -> None:
        if self.samples < 2 or self.samples % 2:
            raise ValueError("samples must be an even number >= 2")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def nes_gradient(objective: Callable[[np.ndarray], float], x: np.ndarray,
                 config: NesConfig) -> np.ndarray:
    """Estimate d objective / dx at x with config.samples probes."""
    x = np.asarray(x, dtype=np.float64)
    half = config.samples // 2
    # counter-based generator: cheap to fork per call, stateless across calls
    rng = np.random.Generator(np.random.Philox(key=config.seed & MASK64))
    deltas = rng.standard_normal((half,) + x.shape)

    values = np.empty(config.samples)
    for i in range(config.samples):
        probe = deltas[i] if i < half else -deltas[config.samples - 1 - i]
        value = float(objective(x + config.sigma * probe))
        if not np.isfinite(value):
            raise EstimationError(f"non-finite objective value at probe {i}")
        values[i] = value

    grad = np.zeros_like(x)
    for i in range(half):
        grad += deltas[i] * (values[i] - values[config.samples - 1 - i])
    grad /= config.sigma * config.samples
    return grad
