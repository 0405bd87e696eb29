"""Attack quality metrics."""

from __future__ import annotations

import numpy as np


def compute_map(original: np.ndarray, adversarial: np.ndarray) -> float:
    """Mean absolute perturbation on the 0-255 scale."""
    x = np.asarray(original, dtype=np.float64)
    y = np.asarray(adversarial, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("shape mismatch between original and adversarial")
    return float(np.abs(y - x).mean() * 255.0)


def compute_sparsity(actions) -> float:
    """Fraction of frames left untouched: 1 - selected / total."""
    a = np.asarray(actions)
    if a.size == 0:
        raise ValueError("empty action vector")
    return float(1.0 - a.sum() / a.size)
