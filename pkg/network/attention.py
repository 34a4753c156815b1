"""Single-headed additive attention with location features from the previous alignment."""

import csv
import logging
from pathlib import Path
from typing import Union

import numpy as np
from numpy.typing import DTypeLike

from autodiff import Tensor
from autodiff import ops
from network.base import Module

logger = logging.getLogger(__name__)


class LocationAttention(Module):
    """
    AttentionParams: query projection W, frame projection V, location
    projection U, bias b, scoring vector w and K location kernels of odd width.

    score_t = wᵀ tanh(W s + V h_t + U loc_t + b), where loc is the previous
    attention vector convolved with the kernels. Encoder frames are used
    directly as values.
    """

    def __init__(
        self,
        name: str,
        query_dim: int,
        enc_dim: int,
        attn_dim: int,
        n_kernels: int,
        kernel_width: int,
        seed: int = 0,
        dtype: DTypeLike = np.float64,
    ) -> None:
        super().__init__(name, seed, dtype)
        if kernel_width % 2 == 0 or n_kernels < 1:
            raise ValueError(f"{name}: need K >= 1 kernels of odd width, got {n_kernels} x {kernel_width}")
        self.W = self.add_parameter("W", (query_dim, attn_dim))
        self.V = self.add_parameter("V", (enc_dim, attn_dim))
        self.U = self.add_parameter("U", (n_kernels, attn_dim))
        self.b = self.add_parameter("b", (attn_dim,), init="zeros", decay=False)
        self.w = self.add_parameter("w", (attn_dim,))
        self.kernels = self.add_parameter("kernels", (kernel_width, 1, n_kernels))

    def precompute(self, enc: Tensor) -> Tensor:
        """Frame projections V h_t for every frame, shared by all decoder steps."""
        return enc @ self.V

    def __call__(
        self,
        query: Tensor,
        enc: Tensor,
        keys: Tensor,
        prev_attn: Tensor,
        mask: np.ndarray,
    ) -> tuple[Tensor, Tensor]:
        """
        Attend over encoder frames.

        Args:
            query: Decoder state (B, Q)
            enc: Encoder frames (B or 1, T, E)
            keys: `precompute(enc)` (B or 1, T, A)
            prev_attn: Previous attention (B, T)
            mask: Valid frames (B or 1, T)

        Returns:
            (context (B, E), attention (B, T))

        Raises:
            ValueError: If every frame of a row is masked
        """
        if not np.all(np.asarray(mask).any(axis=-1)):
            raise ValueError("Attention over a sequence with every frame masked")
        batch, steps = prev_attn.shape
        location = ops.conv1d_time(ops.reshape(prev_attn, (batch, steps, 1)), self.kernels)
        projected_query = ops.reshape(query @ self.W, (batch, 1, -1))
        energy = ops.tanh(keys + projected_query + location @ self.U + self.b)
        attn = ops.masked_softmax(energy @ self.w, mask)
        context = ops.reduce_sum(ops.reshape(attn, (batch, steps, 1)) * enc, axis=1)
        return context, attn


def initial_attention(mask: np.ndarray, dtype: DTypeLike = np.float64) -> np.ndarray:
    """Uniform weights over each row's valid frames."""
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=-1, keepdims=True)
    if np.any(counts == 0):
        raise ValueError("Cannot initialize attention for a sequence with no valid frames")
    return (mask / counts).astype(dtype)


def export_attention_csv(path: Union[str, Path], weights: np.ndarray) -> Path:
    """Write a (steps × frames) attention matrix as CSV, one row per output step."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix = np.atleast_2d(np.asarray(weights))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step"] + [f"frame_{t}" for t in range(matrix.shape[1])])
        for step, row in enumerate(matrix):
            writer.writerow([step] + [f"{value:.6f}" for value in row])
    logger.debug(f"Wrote {matrix.shape[0]}x{matrix.shape[1]} attention matrix to {path}")
    return path
