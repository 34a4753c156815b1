"""Finite-difference verification of recorded gradients."""

import logging
from typing import Mapping

import numpy as np
from numpy.typing import ArrayLike

from autodiff.graph import Graph, NonFiniteError

logger = logging.getLogger(__name__)

DELTA = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Coordinate-wise |a − b| / max(|a|, |b|, δ)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), DELTA)
    return np.abs(analytic - numeric) / scale


def _projected_value(graph: Graph, point: Mapping[str, np.ndarray], weights: Mapping[str, np.ndarray]) -> float:
    outputs = graph.forward(point)
    return float(sum(np.sum(outputs[name].data * w) for name, w in weights.items()))


def check_gradient(
    graph: Graph,
    point: Mapping[str, ArrayLike],
    epsilon: float = 1e-5,
    seed: int = 0,
) -> float:
    """
    Compare backward against central finite differences.

    The graph outputs are reduced to a scalar with a fixed random projection,
    then every coordinate of every input and bound parameter is perturbed by
    ±epsilon. Evaluation happens in float64.

    Args:
        graph: Graph with a build function; stochastic parts must use fixed draws
        point: Values for the graph inputs
        epsilon: Finite-difference step
        seed: Seed of the output projection

    Returns:
        Maximum relative error over all coordinates

    Raises:
        ValueError: If epsilon is not positive
        NonFiniteError: If any node produces a non-finite value (names the node)
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")

    values = {name: np.array(value, dtype=np.float64, copy=True) for name, value in point.items()}
    for name, param in graph.params.items():
        if param.dtype != np.float64:
            logger.warning(f"Parameter {name} is {param.dtype}; casting to float64 for the check")
            param.data = param.data.astype(np.float64)

    previous = graph.check_finite
    graph.check_finite = True
    try:
        outputs = graph.forward(values)
        rng = np.random.default_rng(seed)
        weights = {name: rng.standard_normal(out.shape) for name, out in outputs.items()}
        analytic = graph.backward(weights)

        worst = 0.0
        worst_at = ""
        targets = [(name, values[name]) for name in values] + [
            (name, param.data) for name, param in graph.params.items()
        ]
        for name, array in targets:
            numeric = np.zeros_like(array)
            flat = array.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + epsilon
                upper = _projected_value(graph, values, weights)
                flat[i] = original - epsilon
                lower = _projected_value(graph, values, weights)
                flat[i] = original
                numeric.reshape(-1)[i] = (upper - lower) / (2.0 * epsilon)

            errors = relative_error(analytic[name], numeric)
            if errors.size and float(errors.max()) > worst:
                worst = float(errors.max())
                worst_at = f"{name}[{int(errors.argmax())}]"
    except FloatingPointError as e:
        raise NonFiniteError(f"Gradient check hit a floating point error: {e}") from e
    finally:
        graph.check_finite = previous

    logger.debug(f"Gradient check max relative error {worst:.3e} at {worst_at or '-'}")
    return worst
