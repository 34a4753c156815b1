"""
External LSTM language model over BPE tokens, with cross-utterance state.

Utterances of a recording are grouped (up to a maximum summed duration) and
scored as one stream `BOS t… EOS BOS u… EOS`; the prediction of BOS after an
EOS is not scored. Without cross-utterance state every utterance is its own
stream.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from numpy.typing import DTypeLike

from autodiff import Tensor, load_tensors, save_tensors
from autodiff import ops
from config.models import LmConfig
from network.base import EVAL, ForwardContext, Module, apply_dropout
from network.layers import Linear, LstmCell, RegularizerMasks, dropconnect_mask, lstm_step
from network.models import PerplexityReport
from orchestration.errors import DataError
from training.losses import label_smoothed_nll

logger = logging.getLogger(__name__)

BOS, EOS = 0, 1


@dataclass
class LmState:
    """Per-layer (h, c) of the LM."""

    h: list[Tensor]
    c: list[Tensor]

    def select(self, rows: np.ndarray) -> "LmState":
        return LmState([Tensor(t.data[rows]) for t in self.h], [Tensor(t.data[rows]) for t in self.c])

    @staticmethod
    def stack(states: Sequence["LmState"]) -> "LmState":
        layers = len(states[0].h)
        h = [Tensor(np.concatenate([s.h[k].data for s in states])) for k in range(layers)]
        c = [Tensor(np.concatenate([s.c[k].data for s in states])) for k in range(layers)]
        return LmState(h, c)


@dataclass
class Segment:
    """One utterance as seen by the LM: where it sits in its recording and its tokens."""

    utterance_id: str
    recording_id: str
    start: float
    end: float
    channel: str = "A"
    tokens: list[int] = field(default_factory=list)
    n_words: int = 0

    @property
    def duration(self) -> float:
        return max(self.end - self.start, 0.0)


class LstmLm(Module):
    """Embedding → stacked LSTMs → optional linear projection → output layer."""

    def __init__(self, config: LmConfig, dtype: DTypeLike = np.float64) -> None:
        super().__init__("lm", config.seed, dtype)
        self.config = config
        c = config
        self.embedding = self.add_parameter("embedding", (c.vocab_size, c.embed_dim))
        self.cells: list[LstmCell] = []
        in_dim = c.embed_dim
        for k in range(c.n_layers):
            self.cells.append(self.add_module(LstmCell(f"lm.lstm{k}", in_dim, c.width, c.seed, dtype)))
            in_dim = c.width
        self.projection: Optional[Linear] = None
        if c.projection is not None:
            self.projection = self.add_module(Linear("lm.projection", c.width, c.projection, c.seed, dtype))
            in_dim = c.projection
        self.output = self.add_module(Linear("lm.output", in_dim, c.vocab_size, c.seed, dtype))

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    def zero_state(self, batch: int = 1) -> LmState:
        pairs = [cell.zero_state(batch) for cell in self.cells]
        return LmState([h for h, _ in pairs], [c for _, c in pairs])

    def masks(self, ctx: ForwardContext) -> list[Optional[np.ndarray]]:
        """One DropConnect mask per layer for a batch of streams."""
        return [dropconnect_mask(cell, self.config.dropconnect, ctx) for cell in self.cells]

    def step(
        self,
        state: LmState,
        tokens: np.ndarray,
        ctx: ForwardContext = EVAL,
        masks: Optional[list[Optional[np.ndarray]]] = None,
    ) -> tuple[Tensor, LmState]:
        """
        Consume tokens (B,) and return next-token log-probabilities (B, V).

        Raises:
            ValueError: If a token id is outside the vocabulary
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            raise ValueError(f"Token id out of range [0, {self.vocab_size})")
        masks = masks or [None] * len(self.cells)
        x = apply_dropout(ops.take(self.embedding, tokens), self.config.dropout, ctx)
        hs, cs = [], []
        for k, cell in enumerate(self.cells):
            h, c = lstm_step(cell, x, state.h[k], state.c[k], masks=RegularizerMasks(dropconnect=masks[k]))
            hs.append(h)
            cs.append(c)
            x = apply_dropout(h, self.config.dropout, ctx)
        if self.projection is not None:
            x = self.projection(x)
        return ops.log_softmax(self.output(x)), LmState(hs, cs)

    def forward_sequence(
        self,
        inputs: np.ndarray,
        state: Optional[LmState] = None,
        ctx: ForwardContext = EVAL,
    ) -> tuple[list[Tensor], LmState]:
        """Unroll over padded input tokens (B, L); returns per-step log-probabilities."""
        inputs = np.asarray(inputs, dtype=np.int64)
        state = state or self.zero_state(inputs.shape[0])
        masks = self.masks(ctx)
        steps: list[Tensor] = []
        for t in range(inputs.shape[1]):
            log_probs, state = self.step(state, inputs[:, t], ctx, masks)
            steps.append(log_probs)
        return steps, state


def lm_step(lm: LstmLm, state: LmState, token: int) -> tuple[np.ndarray, LmState]:
    """Single-stream eval step: log-probabilities (V,) after consuming `token`."""
    log_probs, new_state = lm.step(state, np.array([token]))
    return log_probs.data[0], new_state


def count_lm_parameters(config: LmConfig) -> int:
    """Embedding + Σ 4h(d + h + 1) over layers + projection + output layer."""
    c = config
    total = c.vocab_size * c.embed_dim
    in_dim = c.embed_dim
    for _ in range(c.n_layers):
        total += 4 * c.width * (in_dim + c.width + 1)
        in_dim = c.width
    if c.projection is not None:
        total += c.width * c.projection + c.projection
        in_dim = c.projection
    return total + in_dim * c.vocab_size + c.vocab_size


def group_utterances(segments: Sequence[Segment], max_seconds: float = 40.0) -> list[list[Segment]]:
    """
    Greedy in-order grouping of consecutive segments.

    A new group starts on a recording or channel change, when a segment starts
    before its predecessor, or when adding it would push the summed duration
    past `max_seconds`. A segment longer than the limit forms its own group.
    """
    groups: list[list[Segment]] = []
    current: list[Segment] = []
    duration = 0.0
    for segment in segments:
        if current:
            last = current[-1]
            same_stream = segment.recording_id == last.recording_id and segment.channel == last.channel
            if not same_stream or segment.start < last.start or duration + segment.duration > max_seconds:
                groups.append(current)
                current, duration = [], 0.0
        current.append(segment)
        duration += segment.duration
    if current:
        groups.append(current)
    return groups


def frame_stream(group: Sequence[Segment]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Inputs, targets and scored-position flags of one stream.

    For utterances t and u: inputs `BOS t EOS BOS u`, targets `t EOS BOS u EOS`,
    with the BOS target unscored.
    """
    inputs: list[int] = []
    targets: list[int] = []
    scored: list[bool] = []
    for k, segment in enumerate(group):
        if k > 0:
            inputs.append(EOS)
            targets.append(BOS)
            scored.append(False)
        inputs.extend([BOS, *segment.tokens])
        targets.extend([*segment.tokens, EOS])
        scored.extend([True] * (len(segment.tokens) + 1))
    return np.array(inputs, dtype=np.int64), np.array(targets, dtype=np.int64), np.array(scored)


def pad_streams(groups: Sequence[Sequence[Segment]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack framed streams into (B, L) arrays; padding is unscored."""
    framed = [frame_stream(group) for group in groups]
    width = max(len(inputs) for inputs, _, _ in framed)
    inputs = np.full((len(framed), width), EOS, dtype=np.int64)
    targets = np.full((len(framed), width), EOS, dtype=np.int64)
    scored = np.zeros((len(framed), width), dtype=bool)
    for row, (x, y, s) in enumerate(framed):
        inputs[row, : len(x)] = x
        targets[row, : len(y)] = y
        scored[row, : len(s)] = s
    return inputs, targets, scored


def stream_nll(lm: LstmLm, groups: Sequence[Sequence[Segment]]) -> float:
    """Summed NLL of every scored target of a batch of streams (eval mode)."""
    inputs, targets, scored = pad_streams(groups)
    steps, _ = lm.forward_sequence(inputs)
    rows = np.arange(len(groups))
    total = 0.0
    for t, log_probs in enumerate(steps):
        picked = log_probs.data[rows, targets[:, t]].astype(np.float64)
        total -= float(picked[scored[:, t]].sum())
    return total


def perplexity(
    lm: LstmLm,
    segments: Sequence[Segment],
    cross_utterance: bool = True,
    max_group_seconds: Optional[float] = None,
    batch_size: int = 16,
    workers: int = 1,
) -> PerplexityReport:
    """
    Word-level perplexity exp(NLL / words).

    Words are the whitespace tokens of each reference plus one end-of-sentence
    per utterance, in both modes, so reset and cross-utterance results share
    a denominator. Batches of streams are scored in parallel; the total is
    reduced in a fixed order.

    Raises:
        DataError: If the corpus has no words
    """
    n_words = sum(s.n_words + 1 for s in segments)
    if not segments or n_words == 0:
        raise DataError("perplexity needs a corpus with at least one word")
    if cross_utterance:
        limit = max_group_seconds if max_group_seconds is not None else lm.config.max_group_seconds
        groups = group_utterances(segments, limit)
    else:
        groups = [[s] for s in segments]
    batches = [groups[i : i + batch_size] for i in range(0, len(groups), batch_size)]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda batch: stream_nll(lm, batch), batches))
    nll = math.fsum(parts)
    n_tokens = sum(len(s.tokens) + 1 for s in segments)
    ppl = math.exp(nll / n_words)
    logger.debug(f"PPL {ppl:.3f} over {n_words} words in {len(groups)} streams (cross_utterance={cross_utterance})")
    return PerplexityReport(nll=nll, n_tokens=n_tokens, n_words=n_words, n_streams=len(groups), ppl=ppl)


def stream_loss_tensor(
    lm: LstmLm,
    groups: Sequence[Sequence[Segment]],
    label_smoothing: float,
    ctx: ForwardContext = EVAL,
) -> tuple[Tensor, int]:
    """Mean label-smoothed loss over the scored targets of a batch of streams."""
    inputs, targets, scored = pad_streams(groups)
    n_scored = int(scored.sum())
    if n_scored == 0:
        raise ValueError("LM batch has no scored tokens")
    steps, _ = lm.forward_sequence(inputs, ctx=ctx)
    losses = [label_smoothed_nll(log_probs, targets[:, t], label_smoothing) for t, log_probs in enumerate(steps)]
    weights = scored.astype(lm.dtype)
    return ops.reduce_sum(ops.stack(losses, axis=1) * weights) / float(n_scored), n_scored


def save_lm(path: Union[str, Path], lm: LstmLm, extra: Optional[dict] = None) -> Path:
    metadata = {"kind": "lstm_lm", "config": lm.config.model_dump(mode="json"), **(extra or {})}
    return save_tensors(path, lm.state_dict(), metadata)


def load_lm(path: Union[str, Path], dtype: DTypeLike = np.float64) -> tuple[LstmLm, dict]:
    """
    Rebuild an LM from a checkpoint.

    Raises:
        ValueError: If the file is not an LM checkpoint
    """
    tensors, metadata = load_tensors(path)
    if metadata.get("kind") != "lstm_lm":
        raise ValueError(f"{path} is not a language model checkpoint")
    lm = LstmLm(LmConfig.model_validate(metadata["config"]), dtype=dtype)
    lm.load_state_dict(tensors)
    return lm, metadata
