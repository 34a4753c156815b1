"""Tests for the LSTM language model, utterance grouping and perplexity."""

import math

import numpy as np
import pytest
from scipy.special import logsumexp

from autodiff import Graph, check_gradient
from config.settings import lm_preset
from network.lm import (
    BOS,
    EOS,
    LmState,
    LstmLm,
    Segment,
    count_lm_parameters,
    frame_stream,
    group_utterances,
    lm_step,
    load_lm,
    perplexity,
    save_lm,
    stream_loss_tensor,
)
from orchestration.errors import DataError


def _segment(utt: str, rec: str, start: float, end: float, tokens=(3, 4), channel: str = "A") -> Segment:
    return Segment(utt, rec, start, end, channel, list(tokens), n_words=len(tokens))


def _uniform(lm: LstmLm) -> LstmLm:
    lm.output.weight.data[:] = 0.0
    lm.output.bias.data[:] = 0.0
    return lm


class TestLmSize:
    """Tests for LM parameter counts."""

    def test_decoding_lm_is_57m(self):
        """Test the two-layer 2048-wide LM counts 57M ± 2%."""
        assert abs(count_lm_parameters(lm_preset("lm_swb300")) / 57e6 - 1) < 0.02

    def test_wide_lm_is_122m(self):
        """Test the 3072-wide LM counts 122M ± 2%."""
        assert abs(count_lm_parameters(lm_preset("lm_3072")) / 122e6 - 1) < 0.02

    def test_projection_shrinks_output_layer(self):
        """Test the 128-dim bottleneck variant is smaller than the unprojected LM."""
        assert count_lm_parameters(lm_preset("lm_bn128")) < count_lm_parameters(lm_preset("lm_swb300"))

    @pytest.mark.parametrize("projection", [None, 2])
    def test_matches_built_model(self, tiny_lm_config, projection):
        """Test the closed form equals the built LM."""
        config = tiny_lm_config.model_copy(update={"projection": projection, "n_layers": 2})
        assert count_lm_parameters(config) == LstmLm(config).num_parameters()


class TestLmStep:
    """Tests for single LM steps."""

    def test_normalized(self, tiny_lm_config):
        """Test a step returns log-probabilities summing to one."""
        lm = LstmLm(tiny_lm_config)
        log_probs, _ = lm_step(lm, lm.zero_state(), BOS)
        assert log_probs.shape == (6,)
        assert abs(logsumexp(log_probs)) < 1e-6

    def test_deterministic_from_zero_state(self, tiny_lm_config):
        """Test equal states and tokens give equal outputs in eval mode."""
        lm = LstmLm(tiny_lm_config)
        a, _ = lm_step(lm, lm.zero_state(), 3)
        b, _ = lm_step(lm, lm.zero_state(), 3)
        np.testing.assert_array_equal(a, b)

    def test_state_selection(self, tiny_lm_config):
        """Test selecting and stacking rows preserves each stream's state."""
        lm = LstmLm(tiny_lm_config)
        _, state = lm.step(lm.zero_state(2), np.array([3, 4]))
        swapped = LmState.stack([state.select(np.array([1])), state.select(np.array([0]))])
        np.testing.assert_array_equal(swapped.h[0].data, state.h[0].data[::-1])

    def test_rejects_unknown_token(self, tiny_lm_config):
        """Test tokens outside the vocabulary are rejected."""
        lm = LstmLm(tiny_lm_config)
        with pytest.raises(ValueError):
            lm_step(lm, lm.zero_state(), 9)

    def test_checkpoint(self, tiny_lm_config, tmp_path):
        """Test a reloaded LM predicts identically."""
        lm = LstmLm(tiny_lm_config)
        loaded, meta = load_lm(save_lm(tmp_path / "lm.ckpt", lm, {"epoch": 2}))
        assert meta["epoch"] == 2
        np.testing.assert_array_equal(lm_step(lm, lm.zero_state(), 3)[0], lm_step(loaded, loaded.zero_state(), 3)[0])


class TestGroupUtterances:
    """Tests for cross-utterance grouping."""

    def test_greedy_duration_limit(self):
        """Test durations 10, 15, 20 with a 40 s limit group as {10, 15}, {20}."""
        segments = [_segment("a", "r", 0, 10), _segment("b", "r", 10, 25), _segment("c", "r", 25, 45)]
        groups = group_utterances(segments, 40)
        assert [[s.utterance_id for s in g] for g in groups] == [["a", "b"], ["c"]]

    def test_long_segment_is_alone(self):
        """Test a 50 s segment forms its own group."""
        segments = [_segment("a", "r", 0, 5), _segment("b", "r", 5, 55), _segment("c", "r", 55, 60)]
        assert [len(g) for g in group_utterances(segments, 40)] == [1, 1, 1]

    def test_channels_never_mix(self):
        """Test segments of different channels are never grouped."""
        segments = [_segment("a", "r", 0, 1, channel="A"), _segment("b", "r", 1, 2, channel="B")]
        assert len(group_utterances(segments, 40)) == 2

    def test_recordings_never_mix(self):
        """Test a recording change starts a new group."""
        segments = [_segment("a", "r1", 0, 1), _segment("b", "r2", 1, 2)]
        assert len(group_utterances(segments, 40)) == 2

    def test_concatenation_preserves_order(self):
        """Test the flattened groups reproduce the input order."""
        rng = np.random.default_rng(0)
        segments = []
        for k in range(30):
            rec = f"r{k // 7}"
            start = float(k % 7) * 8
            segments.append(_segment(f"u{k}", rec, start, start + rng.uniform(1, 12)))
        flat = [s.utterance_id for g in group_utterances(segments, 20) for s in g]
        assert flat == [s.utterance_id for s in segments]
        assert all(sum(s.duration for s in g) <= 20 or len(g) == 1 for g in group_utterances(segments, 20))


class TestPerplexity:
    """Tests for word-level perplexity."""

    def test_framing_of_two_utterances(self):
        """Test a stream threads EOS into the next utterance's BOS without scoring it."""
        inputs, targets, scored = frame_stream([_segment("a", "r", 0, 1, (3,)), _segment("b", "r", 1, 2, (4,))])
        np.testing.assert_array_equal(inputs, [BOS, 3, EOS, BOS, 4])
        np.testing.assert_array_equal(targets, [3, EOS, BOS, 4, EOS])
        np.testing.assert_array_equal(scored, [True, True, False, True, True])

    def test_uniform_model_has_vocabulary_perplexity(self, tiny_lm_config):
        """Test a uniform LM with one token per word has PPL = V in both modes."""
        lm = _uniform(LstmLm(tiny_lm_config))
        segments = [_segment(f"u{k}", "r", k, k + 1, (3, 4, 5)) for k in range(4)]
        for cross in (False, True):
            report = perplexity(lm, segments, cross_utterance=cross)
            assert report.ppl == pytest.approx(6.0)

    def test_reset_mode_combines_utterances_by_token_count(self, tiny_lm_config):
        """Test reset PPL equals per-utterance NLLs summed and normalized by words."""
        lm = LstmLm(tiny_lm_config)
        segments = [_segment("a", "r", 0, 1, (3, 4)), _segment("b", "r", 1, 2, (5,)), _segment("c", "s", 0, 1, (4, 4, 3))]

        total = 0.0
        for segment in segments:
            state = lm.zero_state()
            previous = BOS
            for token in [*segment.tokens, EOS]:
                log_probs, state = lm_step(lm, state, previous)
                total -= log_probs[token]
                previous = token
        words = sum(s.n_words + 1 for s in segments)

        report = perplexity(lm, segments, cross_utterance=False, batch_size=2)
        assert report.n_streams == 3
        assert report.ppl == pytest.approx(math.exp(total / words))

    def test_cross_utterance_carries_state(self, tiny_lm_config):
        """Test grouping changes the score of a random LM and counts fewer streams."""
        lm = LstmLm(tiny_lm_config.model_copy(update={"seed": 5}))
        segments = [_segment(f"u{k}", "r", k, k + 1, (3 + k % 3, 4)) for k in range(5)]
        reset = perplexity(lm, segments, cross_utterance=False)
        cross = perplexity(lm, segments, cross_utterance=True)
        assert cross.n_streams == 1 and reset.n_streams == 5
        assert cross.n_words == reset.n_words
        assert cross.nll != pytest.approx(reset.nll)

    def test_worker_count_does_not_change_result(self, tiny_lm_config):
        """Test parallel scoring reduces to the same total."""
        lm = LstmLm(tiny_lm_config)
        segments = [_segment(f"u{k}", f"r{k % 3}", k, k + 1, (3, 5)) for k in range(9)]
        one = perplexity(lm, segments, cross_utterance=False, batch_size=2, workers=1)
        four = perplexity(lm, segments, cross_utterance=False, batch_size=2, workers=4)
        assert one.nll == four.nll

    def test_cross_utterance_counts_each_end_of_sentence(self, tiny_lm_config):
        """Test a two-utterance group divides by its words plus one EOS per utterance."""
        lm = LstmLm(tiny_lm_config)
        segments = [_segment("a", "r", 0, 1, (3, 4)), _segment("b", "r", 1, 2, (5,))]
        report = perplexity(lm, segments, cross_utterance=True)
        assert report.n_streams == 1
        assert report.n_words == 5
        assert report.ppl == pytest.approx(math.exp(report.nll / 5))

    def test_empty_corpus(self, tiny_lm_config):
        """Test a corpus without words is rejected as a data error."""
        with pytest.raises(DataError):
            perplexity(LstmLm(tiny_lm_config), [])


class TestStreamLoss:
    """Tests for the LM training loss."""

    def test_gradient(self, tiny_lm_config):
        """Test the label-smoothed stream loss passes the gradient check."""
        lm = LstmLm(tiny_lm_config)
        groups = [[_segment("a", "r", 0, 1, (3, 4)), _segment("b", "r", 1, 2, (5,))], [_segment("c", "s", 0, 1, (4,))]]
        graph = Graph(build=lambda i: stream_loss_tensor(lm, groups, 0.15)[0], params=lm.named_parameters())
        assert check_gradient(graph, {}, epsilon=1e-5) < 1e-4
