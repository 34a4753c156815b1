"""Label-smoothed negative log-likelihood."""

import numpy as np

from autodiff import Tensor
from autodiff import ops


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"label smoothing must be in [0, 1), got {epsilon}")


def label_smoothed_loss(log_probs: np.ndarray, target: int, epsilon: float) -> float:
    """
    −(1 − ε)·log p(target) − (ε / V)·Σ_v log p(v) for one normalized distribution.

    Args:
        log_probs: Log-probabilities over the vocabulary (V,)
        target: Reference token id
        epsilon: Smoothing mass in [0, 1)
    """
    _check_epsilon(epsilon)
    log_probs = np.asarray(log_probs, dtype=np.float64)
    return float(-(1.0 - epsilon) * log_probs[target] - epsilon * log_probs.mean())


def label_smoothed_nll(log_probs: Tensor, targets: np.ndarray, epsilon: float) -> Tensor:
    """Per-row label-smoothed loss of (B, V) log-probabilities; returns (B,)."""
    _check_epsilon(epsilon)
    targets = np.asarray(targets, dtype=np.int64)
    picked = log_probs[np.arange(len(targets)), targets]
    if epsilon == 0.0:
        return -picked
    return picked * -(1.0 - epsilon) - ops.reduce_mean(log_probs, axis=-1) * epsilon
