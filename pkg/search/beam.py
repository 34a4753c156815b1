"""
Step-synchronous beam search with shallow fusion.

Every step expands each live hypothesis over the whole vocabulary (BOS
excluded) and keeps the best `beam_width` candidates by fusion score;
candidates ending in EOS move to the finished pool. A finished candidate
uses up its beam slot, so fewer than `beam_width` hypotheses may stay live
for the next step. Search stops when no
hypothesis is live, when no live hypothesis can still beat the best finished
one, or at the output length cap.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from config.models import FusionWeights
from features.models import FeatureSequence
from network.lm import LmState, LstmLm, Segment, group_utterances
from network.model import BOS, EOS, EncoderOutput, DecoderState, Seq2Seq
from search.fusion import coverage, fusion_score
from search.models import Hypothesis

logger = logging.getLogger(__name__)


@dataclass
class DecodeItem:
    """Prepared network input of one utterance with its recording position."""

    sequence: FeatureSequence
    frames: np.ndarray

    @property
    def utterance_id(self) -> str:
        return self.sequence.utterance_id

    def segment(self) -> Segment:
        s = self.sequence
        return Segment(utterance_id=s.utterance_id, recording_id=s.recording_id, start=s.start_time, end=s.end_time)


def max_output_length(weights: FusionWeights, encoder_frames: int) -> int:
    if weights.max_length is not None:
        return weights.max_length
    return max(1, math.ceil(weights.max_output_factor * encoder_frames))


def greedy_weights(weights: FusionWeights) -> FusionWeights:
    """Beam 1 without LM, length or coverage terms."""
    return weights.model_copy(update={"beam_width": 1, "lm_weight": 0.0, "length_reward": 0.0, "coverage_weight": 0.0, "nbest": 1})


def _advance(
    model: Seq2Seq,
    encoded: EncoderOutput,
    lm: Optional[LstmLm],
    hyps: Sequence[Hypothesis],
    tokens: Sequence[int],
) -> None:
    """Feed each hypothesis its last token and store the next-token predictions."""
    states = DecoderState.stack([h.dec_state for h in hyps])  # type: ignore[misc]
    log_probs, new_state = model.decode_step(states, np.asarray(tokens), encoded)
    lm_probs = lm_state = None
    if lm is not None:
        lm_probs, lm_state = lm.step(LmState.stack([h.lm_state for h in hyps]), np.asarray(tokens))  # type: ignore[misc]
    for row, h in enumerate(hyps):
        h.dec_state = new_state.select(np.array([row]))
        h.next_log_probs = log_probs.data[row].astype(np.float64)
        h.next_attention = new_state.attn.data[row].astype(np.float64)
        if lm_probs is not None and lm_state is not None:
            h.lm_state = lm_state.select(np.array([row]))
            h.lm_next = lm_probs.data[row].astype(np.float64)


def beam_search(
    model: Seq2Seq,
    encoded: EncoderOutput,
    weights: FusionWeights,
    lm: Optional[LstmLm] = None,
    lm_state: Optional[LmState] = None,
) -> list[Hypothesis]:
    """
    Decode one utterance (an EncoderOutput of batch 1).

    Returns:
        Up to `weights.nbest` finished hypotheses sorted by fusion score, or
        the single best live hypothesis flagged unfinished when nothing
        finished within the length cap
    """
    frames = int(encoded.lengths[0])
    limit = max_output_length(weights, frames)
    lam, beta, gamma = weights.lm_weight, weights.length_reward, weights.coverage_weight

    root = Hypothesis(
        tokens=(),
        model_logp=0.0,
        lm_logp=0.0,
        coverage_mass=np.zeros(encoded.mask.shape[1]),
        dec_state=model.start_state(encoded, 1),
        lm_state=(lm_state or lm.zero_state(1)) if lm is not None else None,
    )
    _advance(model, encoded, lm, [root], [BOS])
    live = [root]
    finished: list[Hypothesis] = []

    for step in range(limit):
        rows = []
        for h in live:
            assert h.next_log_probs is not None and h.next_attention is not None
            covered = coverage(h.coverage_mass + h.next_attention, weights.coverage_threshold)
            base = h.model_logp + lam * h.lm_logp + beta * (h.length + 1) + gamma * covered
            row = base + h.next_log_probs
            if lm is not None and h.lm_next is not None:
                row = row + lam * h.lm_next
            row[BOS] = -np.inf
            rows.append(row)
        scores = np.stack(rows)
        vocab = scores.shape[1]
        flat = scores.reshape(-1)
        best = np.argsort(-flat, kind="stable")[: weights.beam_width]

        next_live: list[Hypothesis] = []
        next_tokens: list[int] = []
        for k in best:
            if not np.isfinite(flat[k]):
                continue
            parent, token = live[int(k) // vocab], int(k) % vocab
            assert parent.next_log_probs is not None and parent.next_attention is not None
            child = Hypothesis(
                tokens=parent.tokens + (token,),
                model_logp=parent.model_logp + float(parent.next_log_probs[token]),
                lm_logp=parent.lm_logp + (float(parent.lm_next[token]) if parent.lm_next is not None else 0.0),
                coverage_mass=parent.coverage_mass + parent.next_attention,
                dec_state=parent.dec_state,
                lm_state=parent.lm_state,
                attention=[*parent.attention, parent.next_attention],
            )
            child.score = fusion_score(child, weights)
            if token == EOS:
                child.finished = True
                finished.append(child)
            else:
                next_live.append(child)
                next_tokens.append(token)

        live = next_live
        if not live:
            break
        _advance(model, encoded, lm, live, next_tokens)
        if finished:
            best_finished = max(h.score for h in finished)
            remaining = limit - step - 1
            bound = max(
                h.score + remaining * max(beta, 0.0) + max(gamma, 0.0) * (frames - coverage(h.coverage_mass, weights.coverage_threshold))
                for h in live
            )
            if bound <= best_finished:
                break

    if not finished:
        best_live = max(live, key=lambda h: h.score)
        logger.debug(f"No hypothesis finished within {limit} tokens; returning best live prefix")
        return [best_live]
    finished.sort(key=lambda h: h.score, reverse=True)
    return finished[: weights.nbest]


def greedy_search(model: Seq2Seq, encoded: EncoderOutput, weights: Optional[FusionWeights] = None) -> Hypothesis:
    """Argmax chain: beam 1 with λ = β = γ = 0."""
    return beam_search(model, encoded, greedy_weights(weights or FusionWeights()))[0]


def carry_lm_state(lm: Optional[LstmLm], nbest: Sequence[Hypothesis]) -> Optional[LmState]:
    """
    LM state after the single-best hypothesis including its EOS.

    Returns None (initial state) without an LM or hypotheses.
    """
    if lm is None or not nbest:
        return None
    best = nbest[0]
    state = best.lm_state
    if state is None:
        state = lm.zero_state(1)
        for token in (BOS, *(t for t in best.tokens if t != EOS)):
            _, state = lm.step(state, np.array([token]))
    _, state = lm.step(state, np.array([EOS]))
    return state


def decode_corpus(
    model: Seq2Seq,
    items: Sequence[DecodeItem],
    weights: FusionWeights,
    lm: Optional[LstmLm] = None,
    cross_utterance: bool = False,
    max_group_seconds: float = 40.0,
    workers: int = 1,
) -> dict[str, list[Hypothesis]]:
    """
    N-best lists for every utterance, in input order.

    With a cross-utterance LM, utterances of a group are decoded in order and
    each starts from the LM state carried from its predecessor; groups (or,
    otherwise, single utterances) run in parallel.
    """
    by_id = {item.utterance_id: item for item in items}
    if cross_utterance and lm is not None:
        groups = [[by_id[s.utterance_id] for s in g] for g in group_utterances([i.segment() for i in items], max_group_seconds)]
    else:
        groups = [[item] for item in items]

    def run_group(group: list[DecodeItem]) -> list[tuple[str, list[Hypothesis]]]:
        carried: Optional[LmState] = None
        decoded = []
        for item in group:
            encoded = model.encode(item.frames[None], np.array([item.frames.shape[0]]))
            nbest = beam_search(model, encoded, weights, lm, carried)
            if cross_utterance:
                carried = carry_lm_state(lm, nbest)
            decoded.append((item.utterance_id, nbest))
        return decoded

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = dict(pair for part in pool.map(run_group, groups) for pair in part)
    logger.info(f"Decoded {len(results)} utterances in {len(groups)} groups (beam {weights.beam_width})")
    return {item.utterance_id: results[item.utterance_id] for item in items}
