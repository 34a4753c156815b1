"""Tests for fusion scoring, beam search, cross-utterance LM state and decoding outputs."""

import csv
import itertools
from unittest.mock import patch

import numpy as np
import pytest

from config.models import FusionWeights
from features.models import FeatureSequence
from network.lm import LstmLm
from network.model import BOS, EOS, Seq2Seq
from search import (
    DecodeItem,
    Hypothesis,
    beam_search,
    carry_lm_state,
    coverage,
    decode_corpus,
    fusion_score,
    greedy_search,
    nbest_entries,
    read_hypotheses,
    score_components,
    sweep_beam,
    write_hypotheses,
    write_nbest,
    write_sweep_csv,
)
from text import BpeEncoder, train_bpe
from text.models import SPECIAL_TOKENS


def _encoded(model: Seq2Seq, seed: int = 0, frames: int = 5):
    features = np.random.default_rng(seed).standard_normal((1, frames, model.config.input_dim))
    return model.encode(features, np.array([frames]))


def _sequence_logp(model: Seq2Seq, encoded, tokens) -> float:
    state = model.start_state(encoded, 1)
    previous, total = BOS, 0.0
    for token in tokens:
        log_probs, state = model.decode_step(state, np.array([previous]), encoded)
        total += float(log_probs.data[0, token])
        previous = token
    return total


def _exhaustive_best(model: Seq2Seq, encoded, vocab: int, max_length: int) -> tuple[float, tuple[int, ...]]:
    """Best log-probability and its tokens over every EOS-terminated sequence of at most `max_length` tokens."""
    symbols = [t for t in range(vocab) if t not in (BOS, EOS)]
    best, best_tokens = -np.inf, ()
    for length in range(max_length):
        for prefix in itertools.product(symbols, repeat=length):
            tokens = (*prefix, EOS)
            score = _sequence_logp(model, encoded, tokens)
            if score > best:
                best, best_tokens = score, tokens
    return best, best_tokens


def _items(model: Seq2Seq, n: int, recording: str = "r") -> list[DecodeItem]:
    rng = np.random.default_rng(7)
    items = []
    for k in range(n):
        frames = rng.standard_normal((4 + k, model.config.input_dim))
        seq = FeatureSequence(frames, utterance_id=f"u{k}", speaker_id="s", recording_id=recording, start_time=2.0 * k)
        items.append(DecodeItem(seq, frames))
    return items


@pytest.fixture
def toy_model(tiny_model_config) -> Seq2Seq:
    return Seq2Seq(tiny_model_config.model_copy(update={"vocab_size": 4}))


class TestFusionScore:
    """Tests for shallow-fusion scoring."""

    def test_worked_example(self):
        """Test logP=−2, logP_lm=−3, len 4, coverage 5, (λ, β, γ)=(0.5, 0.1, 0.2) scores −2.1."""
        h = Hypothesis(tokens=(3, 3, 3, EOS), model_logp=-2.0, lm_logp=-3.0, coverage_mass=np.array([0.5] * 5 + [0.1] * 2))
        weights = FusionWeights(lm_weight=0.5, length_reward=0.1, coverage_weight=0.2)
        assert fusion_score(h, weights) == pytest.approx(-2.1)

    def test_degenerate_weights(self):
        """Test zero weights leave the model log-probability."""
        h = Hypothesis(tokens=(3,), model_logp=-1.25, lm_logp=-9.0, coverage_mass=np.ones(3))
        assert fusion_score(h, FusionWeights()) == -1.25

    def test_coverage_threshold_is_inclusive(self):
        """Test frames exactly at the threshold count as covered."""
        assert coverage(np.array([0.49, 0.5, 0.51]), 0.5) == 2

    def test_components_sum_to_total(self):
        """Test the reported components recombine into the total."""
        h = Hypothesis(tokens=(3, EOS), model_logp=-1.0, lm_logp=-2.0, coverage_mass=np.array([1.0, 0.2]))
        w = FusionWeights(lm_weight=0.3, length_reward=0.5, coverage_weight=0.7)
        c = score_components(h, w)
        assert c.total == pytest.approx(c.model + 0.3 * c.lm + 0.5 * c.length + 0.7 * c.coverage)


class TestBeamSearch:
    """Tests for step-synchronous beam search."""

    @pytest.mark.parametrize("seed", range(50))
    def test_wide_beam_matches_exhaustive_search(self, toy_model, seed):
        """Test B=256 on a 4-token vocabulary with at most 4 tokens finds the exhaustive optimum."""
        encoded = _encoded(toy_model, seed)
        optimum, tokens = _exhaustive_best(toy_model, encoded, 4, 4)
        best = beam_search(toy_model, encoded, FusionWeights(beam_width=256, max_length=4, nbest=1))[0]
        assert best.finished
        assert best.tokens == tokens
        assert best.score == pytest.approx(optimum, abs=1e-9)
        assert best.score == pytest.approx(_sequence_logp(toy_model, encoded, best.tokens), abs=1e-9)

    @pytest.mark.parametrize("seed", range(50))
    def test_best_score_never_drops_as_the_beam_widens(self, toy_model, seed):
        """Test the best fusion score is non-decreasing over B in (1, 2, 4, 8)."""
        encoded = _encoded(toy_model, seed)
        scores = [
            beam_search(toy_model, encoded, FusionWeights(beam_width=beam, max_length=4, nbest=1))[0].score
            for beam in (1, 2, 4, 8)
        ]
        assert all(narrow <= wide + 1e-9 for narrow, wide in zip(scores, scores[1:]))

    def test_narrow_beams_never_beat_the_optimum(self, toy_model):
        """Test finished hypotheses of every beam width score at most the exhaustive optimum."""
        for seed in range(4):
            encoded = _encoded(toy_model, seed)
            optimum, _ = _exhaustive_best(toy_model, encoded, 4, 4)
            for beam in (1, 2, 4, 8):
                best = beam_search(toy_model, encoded, FusionWeights(beam_width=beam, max_length=4, nbest=1))[0]
                if best.finished:
                    assert best.score <= optimum + 1e-9

    def test_finished_candidates_take_beam_slots(self, toy_model):
        """Test an EOS candidate in the top B retires and leaves B-1 hypotheses live."""
        encoded = _encoded(toy_model)
        advanced = []

        def fake_advance(model, encoded, lm, hyps, tokens):
            advanced.append(len(hyps))
            for h in hyps:
                h.next_log_probs = np.log([0.001, 0.5, 0.3, 0.199])
                h.next_attention = np.zeros(encoded.mask.shape[1])

        with patch("search.beam._advance", side_effect=fake_advance):
            result = beam_search(toy_model, encoded, FusionWeights(beam_width=2, max_length=4, nbest=1))

        assert advanced[:2] == [1, 1]
        assert result[0].tokens == (EOS,)
        assert result[0].score == pytest.approx(np.log(0.5))

    def test_greedy_is_the_argmax_chain(self, toy_model):
        """Test greedy decoding follows the decoder's argmax (BOS excluded) step by step."""
        encoded = _encoded(toy_model, 3)
        state = toy_model.start_state(encoded, 1)
        previous, chain = BOS, []
        while len(chain) < 6:
            log_probs, state = toy_model.decode_step(state, np.array([previous]), encoded)
            row = log_probs.data[0].copy()
            row[BOS] = -np.inf
            previous = int(np.argmax(row))
            chain.append(previous)
            if previous == EOS:
                break
        assert list(greedy_search(toy_model, encoded, FusionWeights(max_length=6)).tokens) == chain

    def test_nbest_sorted_and_consistent(self, tiny_model_config):
        """Test n-best lists are sorted, EOS-terminated and scored by the fusion formula."""
        model = Seq2Seq(tiny_model_config)
        weights = FusionWeights(beam_width=5, nbest=4, max_length=5, length_reward=0.2, coverage_weight=0.1)
        nbest = beam_search(model, _encoded(model, 4), weights)
        scores = [h.score for h in nbest]
        assert scores == sorted(scores, reverse=True)
        assert 1 <= len(nbest) <= 4
        for h in nbest:
            if h.finished:
                assert h.tokens[-1] == EOS and EOS not in h.tokens[:-1]
            assert h.score == pytest.approx(fusion_score(h, weights))
            assert BOS not in h.tokens

    def test_length_cap_returns_unfinished_prefix(self, toy_model):
        """Test a cap of one token without EOS yields the best live prefix flagged unfinished."""
        encoded = _encoded(toy_model, 0)
        weights = FusionWeights(beam_width=1, max_length=1, length_reward=100.0)
        best = beam_search(toy_model, encoded, weights)[0]
        if best.tokens[-1] != EOS:
            assert not best.finished
        assert best.length == 1

    def test_output_cap_from_encoder_frames(self, toy_model):
        """Test no hypothesis exceeds ⌈1.5 · T'⌉ tokens by default."""
        encoded = _encoded(toy_model, 1, frames=4)
        cap = int(np.ceil(1.5 * int(encoded.lengths[0])))
        for h in beam_search(toy_model, encoded, FusionWeights(beam_width=3, length_reward=5.0)):
            assert h.length <= cap


class TestCrossUtteranceState:
    """Tests for carrying the LM state between utterances."""

    @pytest.fixture
    def lm(self, tiny_lm_config) -> LstmLm:
        return LstmLm(tiny_lm_config.model_copy(update={"vocab_size": 4}))

    def test_no_lm_or_no_hypotheses(self, lm):
        """Test carrying without an LM or without hypotheses gives the initial state."""
        h = Hypothesis(tokens=(3, EOS), model_logp=0.0, lm_logp=0.0, coverage_mass=np.zeros(1))
        assert carry_lm_state(None, [h]) is None
        assert carry_lm_state(lm, []) is None

    def test_state_after_best_hypothesis_and_eos(self, toy_model, lm):
        """Test the carried state equals feeding BOS, the best tokens and EOS from zero."""
        nbest = beam_search(toy_model, _encoded(toy_model, 2), FusionWeights(beam_width=3, lm_weight=0.5, max_length=4), lm)
        carried = carry_lm_state(lm, nbest)

        state = lm.zero_state(1)
        for token in (BOS, *(t for t in nbest[0].tokens if t != EOS), EOS):
            _, state = lm.step(state, np.array([token]))
        for got, want in zip(carried.h, state.h):
            np.testing.assert_allclose(got.data, want.data, atol=1e-12)

    def test_first_utterance_of_a_group_starts_fresh(self, toy_model, lm):
        """Test cross-utterance decoding leaves the first utterance as in reset mode."""
        items = _items(toy_model, 3)
        weights = FusionWeights(beam_width=2, lm_weight=0.5, max_length=4)
        reset = decode_corpus(toy_model, items, weights, lm, cross_utterance=False)
        cross = decode_corpus(toy_model, items, weights, lm, cross_utterance=True)
        assert cross["u0"][0].tokens == reset["u0"][0].tokens
        assert list(cross) == ["u0", "u1", "u2"]


class TestDecodeCorpus:
    """Tests for corpus decoding."""

    def test_worker_count_does_not_change_output(self, toy_model):
        """Test parallel decoding returns the same hypotheses in input order."""
        items = _items(toy_model, 5)
        weights = FusionWeights(beam_width=2, max_length=4)
        one = decode_corpus(toy_model, items, weights, workers=1)
        three = decode_corpus(toy_model, items, weights, workers=3)
        assert list(one) == [item.utterance_id for item in items]
        assert {u: [h.tokens for h in v] for u, v in one.items()} == {u: [h.tokens for h in v] for u, v in three.items()}


class TestOutputs:
    """Tests for n-best, hypothesis and sweep files."""

    @pytest.fixture
    def encoder(self) -> BpeEncoder:
        return BpeEncoder(train_bpe(["a b", "b a"], target_vocab_size=len(SPECIAL_TOKENS) + 3))

    def test_nbest_file(self, tiny_model_config, encoder, tmp_path):
        """Test every n-best line carries id, rank, five score fields and text."""
        model = Seq2Seq(tiny_model_config)
        weights = FusionWeights(beam_width=3, nbest=3, max_length=4)
        entries = nbest_entries("utt1", beam_search(model, _encoded(model), weights), weights, encoder)
        path = write_nbest(tmp_path / "nbest.txt", entries)

        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == len(entries)
        for rank, line in enumerate(lines, 1):
            fields = line.split("\t")
            assert fields[0] == "utt1" and fields[1] == str(rank)
            assert len(fields) == 8
        assert all(EOS not in e.tokens for e in entries)

    def test_hypothesis_file(self, tmp_path):
        """Test a hypothesis file reads back, empty texts included."""
        best = {"a": "hello world", "b": ""}
        assert read_hypotheses(write_hypotheses(tmp_path / "hyp.txt", best)) == best

    def test_duplicate_hypothesis_id(self, tmp_path):
        """Test a repeated utterance id is rejected."""
        path = tmp_path / "hyp.txt"
        path.write_text("a\tx\na\ty\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_hypotheses(path)

    def test_sweep(self, tiny_model_config, encoder, tmp_path):
        """Test the sweep has one row per beam, empty LM columns without an LM, and reruns identically."""
        model = Seq2Seq(tiny_model_config)
        items = _items(model, 3)
        references = {item.utterance_id: "a b" for item in items}
        weights = FusionWeights(max_length=4)

        rows = sweep_beam(model, items, references, encoder, [1, 2], weights)
        again = sweep_beam(model, items, references, encoder, [1, 2], weights)

        assert [r.beam for r in rows] == [1, 2]
        assert all(r.wer_lm is None and r.wer_lm_xutt is None for r in rows)
        assert rows == again
        with open(write_sweep_csv(tmp_path / "sweep.csv", rows)) as f:
            assert next(csv.reader(f)) == ["beam", "wer_nolm", "wer_lm", "wer_lm_xutt"]

    def test_sweep_rejects_zero_beam(self, tiny_model_config, encoder):
        """Test a beam width of zero is rejected."""
        model = Seq2Seq(tiny_model_config)
        with pytest.raises(ValueError):
            sweep_beam(model, _items(model, 1), {"u0": "a"}, encoder, [0], FusionWeights())
