"""
Recurrent and structural layers of the encoder.

LSTM gate order is (i, f, g, o). Weight matrices are stored input-major,
W (D, 4H) and R (H, 4H), so a step is `x @ W + h @ R + b`.
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from numpy.typing import DTypeLike

from autodiff import Tensor, as_tensor
from autodiff import ops
from network.base import EVAL, ForwardContext, Module, apply_dropout, check_rate, dropout_mask

logger = logging.getLogger(__name__)

PyramidMode = Literal["average", "concat"]


class Linear(Module):
    """Affine map x @ W + b over the last axis."""

    def __init__(self, name: str, in_dim: int, out_dim: int, seed: int = 0, dtype: DTypeLike = np.float64) -> None:
        super().__init__(name, seed, dtype)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = self.add_parameter("W", (in_dim, out_dim))
        self.bias = self.add_parameter("b", (out_dim,), init="zeros", decay=False)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class LstmCell(Module):
    """LstmParams: input weights W, recurrent weights R and bias b (forget gate +1)."""

    def __init__(self, name: str, in_dim: int, hidden: int, seed: int = 0, dtype: DTypeLike = np.float64) -> None:
        super().__init__(name, seed, dtype)
        self.in_dim = in_dim
        self.hidden = hidden
        self.W = self.add_parameter("W", (in_dim, 4 * hidden))
        self.R = self.add_parameter("R", (hidden, 4 * hidden))
        self.b = self.add_parameter("b", (4 * hidden,), init="zeros", decay=False)
        self.b.data[hidden:2 * hidden] = 1.0

    def zero_state(self, batch: int) -> tuple[Tensor, Tensor]:
        zeros = np.zeros((batch, self.hidden), dtype=self.dtype)
        return Tensor(zeros), Tensor(zeros.copy())


@dataclass
class RegularizerMasks:
    """
    Fixed stochastic draws for one LSTM step.

    `dropconnect` is an inverted-scaled keep-mask on R, held constant across
    the time steps of a batch. Zoneout draws are binary: 1 keeps the previous
    value. `output_dropout` is applied by the caller to the layer output.
    """

    dropconnect: Optional[np.ndarray] = None
    output_dropout: Optional[np.ndarray] = None
    zoneout_cell: Optional[np.ndarray] = None
    zoneout_output: Optional[np.ndarray] = None


def dropconnect_mask(cell: LstmCell, rate: float, ctx: ForwardContext) -> Optional[np.ndarray]:
    """One keep-mask for R per batch of sequences; None in eval mode or at rate 0."""
    if not ctx.train or rate == 0.0:
        return None
    return dropout_mask(cell.R.shape, rate, ctx.generator(), cell.dtype)


def lstm_step(
    cell: LstmCell,
    x_t: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    masks: Optional[RegularizerMasks] = None,
    zoneout: tuple[float, float] = (0.0, 0.0),
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Tensor, Tensor]:
    """
    One LSTM step with DropConnect and zoneout.

    In training, zoneout keeps each unit's previous value with probability z
    (draws from `masks` when given, else from `rng`); at inference the state
    is the expectation z·prev + (1 − z)·new.

    Raises:
        ValueError: If a zoneout rate is outside [0, 1]
    """
    z_c, z_h = zoneout
    check_rate("zoneout cell", z_c)
    check_rate("zoneout output", z_h)
    masks = masks or RegularizerMasks()

    recurrent = cell.R if masks.dropconnect is None else cell.R * masks.dropconnect
    gates = x_t @ cell.W + h_prev @ recurrent + cell.b
    n = cell.hidden
    i = ops.sigmoid(gates[..., 0:n])
    f = ops.sigmoid(gates[..., n:2 * n])
    g = ops.tanh(gates[..., 2 * n:3 * n])
    o = ops.sigmoid(gates[..., 3 * n:4 * n])
    c_new = f * c_prev + i * g
    h_new = o * ops.tanh(c_new)

    c_t = _zoneout(c_new, c_prev, z_c, masks.zoneout_cell, train, rng)
    h_t = _zoneout(h_new, h_prev, z_h, masks.zoneout_output, train, rng)
    return h_t, c_t


def _zoneout(
    new: Tensor,
    prev: Tensor,
    rate: float,
    keep: Optional[np.ndarray],
    train: bool,
    rng: Optional[np.random.Generator],
) -> Tensor:
    if rate == 0.0 and keep is None:
        return new
    if train:
        if keep is None:
            if rng is None:
                raise ValueError("Zoneout in training needs masks or an rng")
            keep = (rng.random(new.shape) < rate).astype(new.dtype)
        return prev * keep + new * (1.0 - keep)
    return prev * rate + new * (1.0 - rate)


def length_mask(lengths: np.ndarray, steps: int) -> np.ndarray:
    """Boolean (B, T) mask of valid frames."""
    return np.arange(steps)[None, :] < np.asarray(lengths)[:, None]


def reversal_index(lengths: np.ndarray, steps: int) -> np.ndarray:
    """Per-row index reversing the valid prefix and leaving padding in place."""
    t = np.arange(steps)[None, :]
    lengths = np.asarray(lengths)[:, None]
    return np.where(t < lengths, lengths - 1 - t, t)


def run_lstm(
    cell: LstmCell,
    x: Tensor,
    lengths: np.ndarray,
    ctx: ForwardContext = EVAL,
    dropconnect: float = 0.0,
    reverse: bool = False,
) -> Tensor:
    """
    Unroll `cell` over a padded batch x (B, T, D).

    Padded steps keep the previous state and emit zeros. The reverse direction
    runs over each row's valid prefix backwards.
    """
    batch, steps = x.shape[0], x.shape[1]
    lengths = np.asarray(lengths)
    rows = np.arange(batch)[:, None]
    if reverse:
        index = reversal_index(lengths, steps)
        x = x[rows, index]

    masks = RegularizerMasks(dropconnect=dropconnect_mask(cell, dropconnect, ctx))
    valid = length_mask(lengths, steps).astype(cell.dtype)
    h, c = cell.zero_state(batch)
    outputs: list[Tensor] = []
    for t in range(steps):
        h_new, c_new = lstm_step(cell, x[:, t, :], h, c, masks=masks, train=ctx.train, rng=ctx.rng)
        keep = valid[:, t:t + 1]
        if keep.all():
            h, c = h_new, c_new
        else:
            h = h_new * keep + h * (1.0 - keep)
            c = c_new * keep + c * (1.0 - keep)
        outputs.append(h * keep)

    out = ops.stack(outputs, axis=1)
    if reverse:
        out = out[rows, index]
    return out


class BidirectionalLstm(Module):
    """Forward and backward cells; output is the concatenation (B, T, 2H)."""

    def __init__(self, name: str, in_dim: int, hidden: int, seed: int = 0, dtype: DTypeLike = np.float64) -> None:
        super().__init__(name, seed, dtype)
        self.fwd = self.add_module(LstmCell(f"{name}.fwd", in_dim, hidden, seed, dtype))
        self.bwd = self.add_module(LstmCell(f"{name}.bwd", in_dim, hidden, seed, dtype))

    def __call__(
        self,
        x: Tensor,
        lengths: np.ndarray,
        ctx: ForwardContext = EVAL,
        dropconnect: float = 0.0,
    ) -> Tensor:
        forward = run_lstm(self.fwd, x, lengths, ctx, dropconnect)
        backward = run_lstm(self.bwd, x, lengths, ctx, dropconnect, reverse=True)
        return ops.concat([forward, backward], axis=-1)


def pyramidal_reduce(
    x: Tensor,
    lengths: np.ndarray,
    mode: PyramidMode = "concat",
) -> tuple[Tensor, np.ndarray]:
    """
    Halve the frame rate of a padded batch (B, T, D).

    Adjacent frames are paired; an odd final frame is paired with itself.
    "concat" gives (B, ⌈T/2⌉, 2D), "average" the mean of each pair (B, ⌈T/2⌉, D).
    """
    x = as_tensor(x)
    lengths = np.asarray(lengths, dtype=np.int64)
    steps = x.shape[1]
    half = math.ceil(steps / 2)
    j = np.arange(half)[None, :]
    last = np.maximum(lengths - 1, 0)[:, None]
    even = np.broadcast_to(np.minimum(2 * j, steps - 1), (len(lengths), half))
    odd = np.where(2 * j + 1 < lengths[:, None], 2 * j + 1, last)
    odd = np.where(2 * j < lengths[:, None], odd, even)
    rows = np.arange(len(lengths))[:, None]
    first, second = x[rows, even], x[rows, odd]
    new_lengths = (lengths + 1) // 2
    if mode == "concat":
        return ops.concat([first, second], axis=-1), new_lengths
    return (first + second) * 0.5, new_lengths


class BatchNorm(Module):
    """
    BatchNormState: per-channel scale/shift plus running statistics.

    Statistics pool over batch and time, excluding padded frames. When
    `frozen` is set the layer is a fixed affine map and running statistics
    never change.
    """

    def __init__(
        self,
        name: str,
        dim: int,
        momentum: float = 0.1,
        epsilon: float = 1e-5,
        seed: int = 0,
        dtype: DTypeLike = np.float64,
    ) -> None:
        super().__init__(name, seed, dtype)
        check_rate("momentum", momentum)
        self.dim = dim
        self.momentum = momentum
        self.epsilon = epsilon
        self.frozen = False
        self.gamma = self.add_parameter("gamma", (dim,), init="ones", decay=False)
        self.beta = self.add_parameter("beta", (dim,), init="zeros", decay=False)
        self.mean_key = self.add_buffer("running_mean", np.zeros(dim))
        self.var_key = self.add_buffer("running_var", np.ones(dim))

    @property
    def running_mean(self) -> np.ndarray:
        return self._buffers[self.mean_key]

    @property
    def running_var(self) -> np.ndarray:
        return self._buffers[self.var_key]

    def __call__(self, x: Tensor, mask: np.ndarray, train: bool = False) -> Tensor:
        """
        Normalize x (B, T, C) given the (B, T) valid-frame mask.

        Raises:
            ValueError: If the channel dimension does not match
        """
        if x.shape[-1] != self.dim:
            raise ValueError(f"{self.name}: expected {self.dim} channels, got {x.shape[-1]}")
        weights = mask.astype(self.dtype)[..., None]
        if not train or self.frozen:
            scale = 1.0 / np.sqrt(self.running_var + self.epsilon)
            y = (x - self.running_mean) * (self.gamma * scale) + self.beta
            return y * weights

        count = float(weights.sum())
        if count < 1:
            raise ValueError(f"{self.name}: no valid frames in batch")
        mean = ops.reduce_sum(x * weights, axis=(0, 1)) / count
        centered = (x - mean) * weights
        var = ops.reduce_sum(centered * centered, axis=(0, 1)) / count
        y = centered / ops.sqrt(var + self.epsilon) * self.gamma + self.beta

        unbiased = var.data * (count / max(count - 1.0, 1.0))
        self._buffers[self.mean_key] = (1 - self.momentum) * self.running_mean + self.momentum * mean.data
        self._buffers[self.var_key] = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        return y * weights


class EncoderBlock(Module):
    """
    [pyramid] → biLSTM → dropout → linear reduction (+ linear bypass of the
    block input) → batch norm.
    """

    def __init__(
        self,
        name: str,
        in_dim: int,
        hidden: int,
        reduction_dim: int,
        pyramid: bool = False,
        pyramid_mode: PyramidMode = "average",
        residual: bool = True,
        dropout: float = 0.0,
        dropconnect: float = 0.0,
        dropout_before_reduction: bool = True,
        bn_momentum: float = 0.1,
        bn_epsilon: float = 1e-5,
        seed: int = 0,
        dtype: DTypeLike = np.float64,
    ) -> None:
        super().__init__(name, seed, dtype)
        self.pyramid = pyramid
        self.pyramid_mode = pyramid_mode
        self.dropout = dropout
        self.dropconnect = dropconnect
        self.dropout_before_reduction = dropout_before_reduction
        lstm_in = in_dim * 2 if pyramid and pyramid_mode == "concat" else in_dim
        self.lstm = self.add_module(BidirectionalLstm(f"{name}.lstm", lstm_in, hidden, seed, dtype))
        self.reduction = self.add_module(Linear(f"{name}.reduce", 2 * hidden, reduction_dim, seed, dtype))
        self.bypass = (
            self.add_module(Linear(f"{name}.bypass", lstm_in, reduction_dim, seed, dtype)) if residual else None
        )
        self.norm = self.add_module(BatchNorm(f"{name}.bn", reduction_dim, bn_momentum, bn_epsilon, seed, dtype))

    def __call__(self, x: Tensor, lengths: np.ndarray, ctx: ForwardContext = EVAL) -> tuple[Tensor, np.ndarray]:
        if self.pyramid:
            x, lengths = pyramidal_reduce(x, lengths, self.pyramid_mode)
        y = self.lstm(x, lengths, ctx, self.dropconnect)
        if self.dropout_before_reduction:
            y = self.reduction(apply_dropout(y, self.dropout, ctx))
        else:
            y = apply_dropout(self.reduction(y), self.dropout, ctx)
        if self.bypass is not None:
            y = y + self.bypass(x)
        mask = length_mask(lengths, y.shape[1])
        return self.norm(y, mask, train=ctx.train), lengths
