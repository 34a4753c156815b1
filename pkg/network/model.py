"""
Attention encoder-decoder.

Encoder: a stack of residual bidirectional LSTM blocks (the first ones halve
the frame rate) followed by a linear bottleneck. Decoder step:

    embed → symbol LSTM → query = bottleneck(symbol out ‖ previous acoustic out)
          → attend → acoustic LSTM over the context
          → bottleneck(symbol out ‖ acoustic out) → output layer → log-softmax

The decoder bottleneck is shared by the query and output paths.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from numpy.typing import DTypeLike

from autodiff import Graph, Tensor, load_tensors, save_tensors
from autodiff import ops
from config.models import ModelConfig
from network.attention import LocationAttention, initial_attention
from network.base import EVAL, ForwardContext, Module, apply_dropout
from network.layers import EncoderBlock, Linear, LstmCell, RegularizerMasks, dropconnect_mask, length_mask, lstm_step
from network.models import ParameterCount
from training.losses import label_smoothed_nll
from training.models import ScheduleState

logger = logging.getLogger(__name__)

BOS, EOS, UNK = 0, 1, 2


@dataclass
class EncoderOutput:
    """Encoder frames with their shared attention keys and valid-frame mask."""

    enc: Tensor
    keys: Tensor
    lengths: np.ndarray
    mask: np.ndarray


@dataclass
class DecoderState:
    """Symbol and acoustic LSTM states plus the previous attention vector."""

    lm_h: Tensor
    lm_c: Tensor
    fus_h: Tensor
    fus_c: Tensor
    attn: Tensor

    def select(self, rows: np.ndarray) -> "DecoderState":
        """Detached copy holding only `rows` (used to reorder beams)."""
        return DecoderState(*(Tensor(t.data[rows]) for t in (self.lm_h, self.lm_c, self.fus_h, self.fus_c, self.attn)))

    @staticmethod
    def stack(states: list["DecoderState"]) -> "DecoderState":
        """Concatenate single-row states into one batch."""
        fields = ("lm_h", "lm_c", "fus_h", "fus_c", "attn")
        return DecoderState(*(Tensor(np.concatenate([getattr(s, f).data for s in states])) for f in fields))


@dataclass
class DecoderMasks:
    """DropConnect keep-masks, drawn once per batch of sequences."""

    lm: Optional[np.ndarray] = None
    fusion: Optional[np.ndarray] = None


@dataclass
class Batch:
    """
    Padded training batch.

    `tokens` hold BOS … EOS framed targets padded with EOS; `token_lengths`
    count BOS and EOS.
    """

    features: np.ndarray
    feature_lengths: np.ndarray
    tokens: np.ndarray
    token_lengths: np.ndarray
    utterance_ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass
class LossResult:
    """Mean label-smoothed loss, its gradients, and token accuracy counts."""

    loss: float
    grads: dict[str, np.ndarray]
    n_tokens: int
    n_errors: int


class Seq2Seq(Module):
    """The full encoder-decoder built from a ModelConfig."""

    def __init__(self, config: ModelConfig, dtype: DTypeLike = np.float64) -> None:
        super().__init__("model", config.seed, dtype)
        self.config = config
        c = config
        self.blocks: list[EncoderBlock] = []
        in_dim = c.input_dim
        for k in range(c.n_layers):
            block = EncoderBlock(
                f"encoder.block{k}",
                in_dim,
                c.lstm_width,
                c.reduction_dim,
                pyramid=k < c.pyramid_layers,
                pyramid_mode=c.pyramid_mode,
                residual=c.residual,
                dropout=c.encoder_dropout,
                dropconnect=c.encoder_dropconnect,
                dropout_before_reduction=c.dropout_before_reduction,
                bn_momentum=c.bn_momentum,
                bn_epsilon=c.bn_epsilon,
                seed=c.seed,
                dtype=dtype,
            )
            self.blocks.append(self.add_module(block))
            in_dim = c.reduction_dim
        self.enc_bottleneck = self.add_module(Linear("encoder.bottleneck", in_dim, c.encoder_output_dim, c.seed, dtype))

        decoder = self.add_module(Module("decoder", c.seed, dtype))
        self.embedding = decoder.add_parameter("embedding", (c.vocab_size, c.embed_dim))
        self.lm_cell = self.add_module(LstmCell("decoder.symbol_lstm", c.embed_dim, c.lm_lstm_width, c.seed, dtype))
        self.fusion_cell = self.add_module(
            LstmCell("decoder.acoustic_lstm", c.encoder_output_dim, c.fusion_lstm_width, c.seed, dtype)
        )
        self.bottleneck = self.add_module(
            Linear("decoder.bottleneck", c.lm_lstm_width + c.fusion_lstm_width, c.bottleneck_dim, c.seed, dtype)
        )
        self.output = self.add_module(Linear("decoder.output", c.bottleneck_dim, c.vocab_size, c.seed, dtype))
        self.attention = self.add_module(
            LocationAttention(
                "decoder.attention",
                c.bottleneck_dim,
                c.encoder_output_dim,
                c.attention_dim,
                c.location_kernels,
                c.location_kernel_width,
                c.seed,
                dtype,
            )
        )

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    def freeze_batch_norm(self, frozen: bool = True) -> None:
        for block in self.blocks:
            block.norm.frozen = frozen

    def encode(self, features: np.ndarray, lengths: np.ndarray, ctx: ForwardContext = EVAL) -> EncoderOutput:
        """
        Run the encoder on padded features (B, T, D).

        Returns:
            EncoderOutput with T' = ⌈T / 2^pyramid_layers⌉ frames of encoder_output_dim

        Raises:
            ValueError: On empty inputs or a feature dimension mismatch
        """
        features = np.asarray(features)
        lengths = np.asarray(lengths, dtype=np.int64)
        if features.ndim != 3 or features.shape[1] == 0 or np.any(lengths < 1):
            raise ValueError("encode needs a (B, T, D) batch with every T >= 1")
        if features.shape[2] != self.config.input_dim:
            raise ValueError(f"Expected {self.config.input_dim}-dim features, got {features.shape[2]}")

        x = Tensor(features, dtype=self.dtype)
        for block in self.blocks:
            x, lengths = block(x, lengths, ctx)
        enc = self.enc_bottleneck(x)
        return EncoderOutput(enc, self.attention.precompute(enc), lengths, length_mask(lengths, enc.shape[1]))

    def start_state(self, encoded: EncoderOutput, batch: Optional[int] = None) -> DecoderState:
        """Zero LSTM states and uniform attention over valid frames."""
        batch = batch or encoded.enc.shape[0]
        lm_h, lm_c = self.lm_cell.zero_state(batch)
        fus_h, fus_c = self.fusion_cell.zero_state(batch)
        attn = np.broadcast_to(initial_attention(encoded.mask, self.dtype), (batch, encoded.mask.shape[1]))
        return DecoderState(lm_h, lm_c, fus_h, fus_c, Tensor(attn.copy()))

    def decoder_masks(self, ctx: ForwardContext) -> DecoderMasks:
        rate = self.config.weight_dropout
        return DecoderMasks(dropconnect_mask(self.lm_cell, rate, ctx), dropconnect_mask(self.fusion_cell, rate, ctx))

    def decode_step(
        self,
        state: DecoderState,
        tokens: np.ndarray,
        encoded: EncoderOutput,
        ctx: ForwardContext = EVAL,
        masks: Optional[DecoderMasks] = None,
    ) -> tuple[Tensor, DecoderState]:
        """
        Consume the previous tokens (B,) and predict the next.

        Returns:
            (log-probabilities (B, V), new state)

        Raises:
            ValueError: If a token id is outside the vocabulary
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            raise ValueError(f"Token id out of range [0, {self.vocab_size})")
        c = self.config
        masks = masks or DecoderMasks()

        embedded = apply_dropout(ops.take(self.embedding, tokens), c.embed_dropout, ctx)
        lm_h, lm_c = lstm_step(
            self.lm_cell, embedded, state.lm_h, state.lm_c,
            masks=RegularizerMasks(dropconnect=masks.lm), train=ctx.train, rng=ctx.rng,
        )
        query = self.bottleneck(ops.concat([lm_h, state.fus_h], axis=-1))
        context, attn = self.attention(query, encoded.enc, encoded.keys, state.attn, encoded.mask)
        fus_h, fus_c = lstm_step(
            self.fusion_cell, context, state.fus_h, state.fus_c,
            masks=RegularizerMasks(dropconnect=masks.fusion),
            zoneout=(c.zoneout_cell, c.zoneout_output), train=ctx.train, rng=ctx.rng,
        )
        joint = apply_dropout(ops.concat([lm_h, fus_h], axis=-1), c.output_dropout, ctx)
        log_probs = ops.log_softmax(self.output(self.bottleneck(joint)))
        return log_probs, DecoderState(lm_h, lm_c, fus_h, fus_c, attn)


def count_parameters(config: ModelConfig) -> ParameterCount:
    """
    Closed-form parameter count.

    LSTM(d→h) = 4h(d + h + 1); Linear(i→o) = io + o; batch norm = 2·width.
    Encoder block k: two LSTM directions over its input (doubled by a concat
    pyramid), reduction 2H→L, optional bypass, batch norm; then the L→E
    bottleneck. Decoder: embedding, symbol LSTM, acoustic LSTM over the
    context, shared bottleneck, output layer and attention (W, V, U, b, w and
    the location kernels).
    """
    c = config

    def lstm(d: int, h: int) -> int:
        return 4 * h * (d + h + 1)

    def linear(i: int, o: int) -> int:
        return i * o + o

    encoder = 0
    in_dim = c.input_dim
    for k in range(c.n_layers):
        lstm_in = in_dim * 2 if k < c.pyramid_layers and c.pyramid_mode == "concat" else in_dim
        encoder += 2 * lstm(lstm_in, c.lstm_width) + linear(2 * c.lstm_width, c.reduction_dim)
        if c.residual:
            encoder += linear(lstm_in, c.reduction_dim)
        encoder += 2 * c.reduction_dim
        in_dim = c.reduction_dim
    encoder += linear(in_dim, c.encoder_output_dim)

    attention = (
        c.bottleneck_dim * c.attention_dim
        + c.encoder_output_dim * c.attention_dim
        + c.location_kernels * c.attention_dim
        + 2 * c.attention_dim
        + c.location_kernel_width * c.location_kernels
    )
    decoder = (
        c.vocab_size * c.embed_dim
        + lstm(c.embed_dim, c.lm_lstm_width)
        + lstm(c.encoder_output_dim, c.fusion_lstm_width)
        + linear(c.lm_lstm_width + c.fusion_lstm_width, c.bottleneck_dim)
        + linear(c.bottleneck_dim, c.vocab_size)
        + attention
    )
    return ParameterCount(encoder=encoder, decoder=decoder, total=encoder + decoder)


def sequence_loss_tensor(
    model: Seq2Seq,
    batch: Batch,
    label_smoothing: float,
    teacher_forcing: float,
    ctx: ForwardContext = EVAL,
) -> tuple[Tensor, int, int]:
    """
    Build the label-smoothed loss of a batch on the active graph.

    With probability `teacher_forcing` the previous token is the reference;
    otherwise it is sampled from the model's previous-step distribution.

    Returns:
        (mean loss over valid target tokens, tokens, argmax errors)

    Raises:
        ValueError: If the batch is empty
    """
    if len(batch) == 0:
        raise ValueError("sequence_loss on an empty batch")
    tokens = np.asarray(batch.tokens, dtype=np.int64)
    steps = tokens.shape[1] - 1
    valid = length_mask(np.asarray(batch.token_lengths) - 1, steps)
    n_tokens = int(valid.sum())
    if n_tokens == 0:
        raise ValueError("sequence_loss on a batch without target tokens")

    encoded = model.encode(batch.features, batch.feature_lengths, ctx)
    state = model.start_state(encoded)
    masks = model.decoder_masks(ctx)
    previous = tokens[:, 0]
    row_losses: list[Tensor] = []
    errors = 0
    for u in range(steps):
        log_probs, state = model.decode_step(state, previous, encoded, ctx, masks)
        gold = tokens[:, u + 1]
        row_losses.append(label_smoothed_nll(log_probs, gold, label_smoothing))
        errors += int(((log_probs.data.argmax(axis=-1) != gold) & valid[:, u]).sum())

        previous = gold
        if teacher_forcing < 1.0 and ctx.train:
            rng = ctx.generator()
            probs = np.exp(log_probs.data.astype(np.float64))
            cumulative = np.cumsum(probs, axis=-1)
            draws = rng.random(len(gold))[:, None] * cumulative[:, -1:]
            sampled = np.minimum((cumulative < draws).sum(axis=-1), model.vocab_size - 1)
            previous = np.where(rng.random(len(gold)) < teacher_forcing, gold, sampled)

    per_token = ops.stack(row_losses, axis=1) * valid.astype(model.dtype)
    return ops.reduce_sum(per_token) / float(n_tokens), n_tokens, errors


def sequence_loss(
    model: Seq2Seq,
    batch: Batch,
    schedule: ScheduleState,
    rng: Optional[np.random.Generator] = None,
) -> LossResult:
    """
    Training loss and gradients of one batch under the schedule's settings.

    Without `rng` the pass runs in eval mode with pure teacher forcing.
    """
    train = rng is not None
    ctx = ForwardContext(train=train, rng=rng)
    params = model.named_parameters()
    with Graph() as graph:
        loss, n_tokens, errors = sequence_loss_tensor(
            model, batch, schedule.label_smoothing, schedule.teacher_forcing if train else 1.0, ctx
        )
    grads = graph.gradient(loss, params)
    return LossResult(loss=loss.item(), grads=grads, n_tokens=n_tokens, n_errors=errors)


def save_model(path: Union[str, Path], model: Seq2Seq, extra: Optional[dict] = None) -> Path:
    """Checkpoint parameters and batch-norm statistics with the config as header."""
    metadata = {"kind": "seq2seq", "config": model.config.model_dump(mode="json"), **(extra or {})}
    return save_tensors(path, model.state_dict(), metadata)


def load_model(path: Union[str, Path], dtype: DTypeLike = np.float64) -> tuple[Seq2Seq, dict]:
    """
    Rebuild a model from a checkpoint.

    Raises:
        ValueError: If the file is not an encoder-decoder checkpoint
    """
    tensors, metadata = load_tensors(path)
    if metadata.get("kind") != "seq2seq":
        raise ValueError(f"{path} is not an encoder-decoder checkpoint")
    model = Seq2Seq(ModelConfig.model_validate(metadata["config"]), dtype=dtype)
    model.load_state_dict(tensors)
    return model, metadata
