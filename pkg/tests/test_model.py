"""Tests for the encoder-decoder: sizes, decoding steps, loss and checkpoints."""

import numpy as np
import pytest
from scipy.special import logsumexp

from autodiff import Graph, check_gradient
from config.settings import model_preset
from network.base import EVAL, ForwardContext
from network.model import (
    BOS,
    EOS,
    Batch,
    DecoderState,
    Seq2Seq,
    count_parameters,
    load_model,
    save_model,
    sequence_loss,
    sequence_loss_tensor,
)
from training.models import ScheduleState


def _batch(config, seed: int = 0) -> Batch:
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((2, 4, config.input_dim))
    tokens = np.array([[BOS, 3, 4, EOS], [BOS, 5, EOS, EOS]])
    return Batch(features, np.array([4, 3]), tokens, np.array([4, 3]), ["a", "b"])


def _schedule(**updates) -> ScheduleState:
    values = dict(
        epoch=1,
        lr=0.1,
        batch_size=2,
        curriculum_mode="sorted",
        label_smoothing=0.35,
        teacher_forcing=1.0,
    )
    values.update(updates)
    return ScheduleState(**values)


class TestParameterCount:
    """Tests for the closed-form parameter count."""

    def test_full_recipe_total(self):
        """Test the bundled 280M model counts 280.1M ± 2%."""
        count = count_parameters(model_preset("swb300"))
        assert abs(count.total / 280.1e6 - 1) < 0.02

    def test_full_recipe_decoder(self):
        """Test the decoder holds 5.4M ± 5% of the parameters."""
        count = count_parameters(model_preset("swb300"))
        assert abs(count.decoder / 5.4e6 - 1) < 0.05

    @pytest.mark.parametrize(
        "preset,millions",
        [("size_28m", 28.5), ("size_57m", 57.3), ("size_75m", 75.1), ("size_125m", 125.0), ("size_202m", 201.6), ("size_280m", 280.1)],
    )
    def test_model_size_presets(self, preset, millions):
        """Test every model-size preset matches its published total within 2%."""
        assert abs(count_parameters(model_preset(preset)).total / (millions * 1e6) - 1) < 0.02

    def test_concat_pyramid_is_larger(self):
        """Test concatenating frame pairs widens the first blocks' inputs."""
        average = count_parameters(model_preset("swb300")).total
        concat = count_parameters(model_preset("swb300_concat_pyramid")).total
        assert concat > average * 1.05

    def test_ten_layer_model_is_countable(self):
        """Test the ten-layer configuration adds two encoder blocks."""
        assert count_parameters(model_preset("swb2000_10layer")).encoder > count_parameters(model_preset("swb300")).encoder

    @pytest.mark.parametrize("updates", [{}, {"pyramid_mode": "concat"}, {"residual": False}, {"pyramid_layers": 0}])
    def test_matches_built_model(self, tiny_model_config, updates):
        """Test the closed form equals the parameters of the built model."""
        config = tiny_model_config.model_copy(update=updates)
        model = Seq2Seq(config)
        assert count_parameters(config).total == model.num_parameters()

    def test_millions(self):
        """Test the breakdown in millions."""
        count = count_parameters(model_preset("size_28m"))
        assert count.millions()["total"] == pytest.approx(count.total / 1e6)


class TestSeq2Seq:
    """Tests for encoding and decoding steps."""

    def test_encode_shortens_by_pyramid(self, tiny_model_config):
        """Test one pyramid layer halves every length, rounding up."""
        model = Seq2Seq(tiny_model_config)
        encoded = model.encode(np.ones((2, 5, 6)), np.array([5, 2]))
        assert encoded.enc.shape == (2, 3, 4)
        np.testing.assert_array_equal(encoded.lengths, [3, 1])
        np.testing.assert_array_equal(encoded.mask, [[True, True, True], [True, False, False]])

    @pytest.mark.parametrize("mode", ["average", "concat"])
    def test_encode_length_for_every_input_length(self, tiny_model_config, mode):
        """Test two pyramid layers give ⌈⌈T/2⌉/2⌉ frames for every T from 1 to 64."""
        model = Seq2Seq(tiny_model_config.model_copy(update={"pyramid_layers": 2, "pyramid_mode": mode}))
        lengths = np.arange(1, 65)
        encoded = model.encode(np.random.default_rng(0).standard_normal((64, 64, 6)), lengths)
        expected = np.ceil(np.ceil(lengths / 2) / 2).astype(int)
        np.testing.assert_array_equal(encoded.lengths, expected)
        np.testing.assert_array_equal(encoded.mask.sum(axis=1), expected)
        assert encoded.enc.shape[1] == 16

    def test_encode_rejects_wrong_dimension(self, tiny_model_config):
        """Test features of the wrong width are rejected."""
        model = Seq2Seq(tiny_model_config)
        with pytest.raises(ValueError):
            model.encode(np.ones((1, 3, 5)), np.array([3]))

    def test_encode_rejects_empty_input(self, tiny_model_config):
        """Test a zero-length utterance is rejected."""
        model = Seq2Seq(tiny_model_config)
        with pytest.raises(ValueError):
            model.encode(np.ones((1, 3, 6)), np.array([0]))

    def test_decode_step_is_log_distribution(self, tiny_model_config):
        """Test every step yields normalized log-probabilities and a valid alignment."""
        model = Seq2Seq(tiny_model_config)
        encoded = model.encode(np.random.default_rng(0).standard_normal((2, 4, 6)), np.array([4, 2]))
        state = model.start_state(encoded)
        tokens = np.array([BOS, BOS])
        for _ in range(3):
            log_probs, state = model.decode_step(state, tokens, encoded)
            np.testing.assert_allclose(logsumexp(log_probs.data, axis=-1), 0.0, atol=1e-12)
            np.testing.assert_allclose(state.attn.data.sum(axis=-1), 1.0)
            assert not state.attn.data[1, 1:].any()
            tokens = log_probs.data.argmax(axis=-1)

    def test_untrained_entropy_is_near_uniform(self, tiny_model_config):
        """Test a randomly initialized decoder predicts with per-token entropy close to ln V."""
        model = Seq2Seq(tiny_model_config)
        entropies = []
        for seed in range(5):
            encoded = model.encode(np.random.default_rng(seed).standard_normal((1, 6, 6)), np.array([6]))
            state = model.start_state(encoded)
            tokens = np.array([BOS])
            for _ in range(4):
                log_probs, state = model.decode_step(state, tokens, encoded)
                entropies.append(-float(np.sum(np.exp(log_probs.data[0]) * log_probs.data[0])))
                tokens = log_probs.data.argmax(axis=-1)
        uniform = np.log(tiny_model_config.vocab_size)
        assert 0.9 * uniform < np.mean(entropies) <= uniform + 1e-12

    def test_decode_step_rejects_unknown_token(self, tiny_model_config):
        """Test a token outside the vocabulary is rejected."""
        model = Seq2Seq(tiny_model_config)
        encoded = model.encode(np.ones((1, 2, 6)), np.array([2]))
        with pytest.raises(ValueError):
            model.decode_step(model.start_state(encoded), np.array([6]), encoded)

    def test_batched_step_matches_single_rows(self, tiny_model_config):
        """Test a stacked state decodes every row as if it were alone."""
        model = Seq2Seq(tiny_model_config)
        encoded = model.encode(np.random.default_rng(1).standard_normal((1, 4, 6)), np.array([4]))
        start = model.start_state(encoded)
        a, state_a = model.decode_step(start, np.array([3]), encoded)
        b, _ = model.decode_step(start, np.array([4]), encoded)

        stacked = DecoderState.stack([state_a, state_a.select(np.array([0]))])
        both, _ = model.decode_step(stacked, np.array([2, 2]), encoded)
        single, _ = model.decode_step(state_a, np.array([2]), encoded)

        np.testing.assert_allclose(both.data[0], single.data[0])
        np.testing.assert_allclose(both.data[1], single.data[0])
        assert not np.allclose(a.data, b.data)

    def test_same_seed_same_weights(self, tiny_model_config):
        """Test initialization is a pure function of the seed."""
        first = Seq2Seq(tiny_model_config).state_dict()
        second = Seq2Seq(tiny_model_config).state_dict()
        assert first.keys() == second.keys()
        assert all(np.array_equal(first[k], second[k]) for k in first)


class TestSequenceLoss:
    """Tests for the label-smoothed sequence loss."""

    def test_gradient(self, tiny_model_config):
        """Test the loss gradient over every parameter is within 1e-4."""
        model = Seq2Seq(tiny_model_config)
        batch = _batch(tiny_model_config)

        graph = Graph(
            build=lambda i: sequence_loss_tensor(model, batch, 0.35, 1.0, EVAL)[0],
            params=model.named_parameters(),
        )
        assert check_gradient(graph, {}, epsilon=1e-5) < 1e-4

    def test_counts_only_valid_targets(self, tiny_model_config):
        """Test padded targets are excluded from the token count."""
        model = Seq2Seq(tiny_model_config)
        result = sequence_loss(model, _batch(tiny_model_config), _schedule())
        assert result.n_tokens == 5
        assert 0 <= result.n_errors <= 5
        assert result.loss > 0

    def test_gradients_cover_every_parameter(self, tiny_model_config):
        """Test the loss returns one gradient per parameter with matching shape."""
        model = Seq2Seq(tiny_model_config)
        result = sequence_loss(model, _batch(tiny_model_config), _schedule())
        params = model.named_parameters()
        assert set(result.grads) == set(params)
        assert all(result.grads[k].shape == params[k].shape for k in params)

    def test_training_pass_is_seeded(self, tiny_model_config):
        """Test two training passes with equal seeds give identical losses."""
        model = Seq2Seq(tiny_model_config)
        batch = _batch(tiny_model_config)
        schedule = _schedule(teacher_forcing=0.5)
        first = sequence_loss(model, batch, schedule, np.random.default_rng(4))
        second = sequence_loss(model, batch, schedule, np.random.default_rng(4))
        assert first.loss == second.loss

    def test_empty_batch(self, tiny_model_config):
        """Test an empty batch is rejected."""
        model = Seq2Seq(tiny_model_config)
        empty = Batch(np.zeros((0, 1, 6)), np.zeros(0, dtype=int), np.zeros((0, 2), dtype=int), np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            sequence_loss_tensor(model, empty, 0.0, 1.0, ForwardContext())


class TestCheckpoint:
    """Tests for model checkpoints."""

    def test_save_and_load(self, tiny_model_config, tmp_path):
        """Test a reloaded model decodes identically."""
        model = Seq2Seq(tiny_model_config)
        model.blocks[0].norm.running_mean[:] = 0.5
        path = save_model(tmp_path / "model.ckpt", model, {"epoch": 3})

        loaded, meta = load_model(path)

        assert meta["epoch"] == 3
        assert loaded.config == tiny_model_config
        np.testing.assert_array_equal(loaded.blocks[0].norm.running_mean, 0.5)
        features = np.random.default_rng(2).standard_normal((1, 3, 6))
        a = model.encode(features, np.array([3])).enc.data
        b = loaded.encode(features, np.array([3])).enc.data
        np.testing.assert_array_equal(a, b)

    def test_rejects_lm_checkpoint(self, tiny_lm_config, tmp_path):
        """Test an LM checkpoint is not mistaken for an encoder-decoder."""
        from network.lm import LstmLm, save_lm

        path = save_lm(tmp_path / "lm.ckpt", LstmLm(tiny_lm_config))
        with pytest.raises(ValueError):
            load_model(path)
