"""Gaussian weight noise applied to a working copy of the weights."""

import logging
from contextlib import contextmanager
from typing import Iterator, Mapping

import numpy as np

from autodiff import Parameter

logger = logging.getLogger(__name__)


def apply_weight_noise(
    params: Mapping[str, Parameter],
    variance: float,
    rng: np.random.Generator,
) -> dict[str, np.ndarray]:
    """
    Noisy copies of every decayed parameter (weights; not biases or BN).

    Returns:
        Mapping name → θ + N(0, variance); parameters themselves are untouched
    """
    if variance < 0:
        raise ValueError(f"weight noise variance must be >= 0, got {variance}")
    std = float(np.sqrt(variance))
    noisy: dict[str, np.ndarray] = {}
    for name, param in params.items():
        if not param.decay:
            continue
        if std == 0.0:
            noisy[name] = param.data.copy()
        else:
            noisy[name] = (param.data + rng.normal(0.0, std, size=param.shape)).astype(param.dtype)
    return noisy


@contextmanager
def noisy_weights(
    params: Mapping[str, Parameter],
    variance: float,
    rng: np.random.Generator,
) -> Iterator[dict[str, np.ndarray]]:
    """Swap noisy copies in for a forward/backward pass and restore the clean arrays afterwards."""
    noisy = apply_weight_noise(params, variance, rng)
    clean = {name: params[name].data for name in noisy}
    try:
        for name, value in noisy.items():
            params[name].data = value
        yield noisy
    finally:
        for name, value in clean.items():
            params[name].data = value
