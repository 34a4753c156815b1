"""Shared fixtures: tiny configurations that build and run in milliseconds."""

import numpy as np
import pytest

from config.models import LmConfig, ModelConfig, SynthConfig


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(
        input_dim=6,
        n_layers=2,
        lstm_width=4,
        reduction_dim=5,
        pyramid_layers=1,
        encoder_output_dim=4,
        embed_dim=3,
        lm_lstm_width=4,
        fusion_lstm_width=4,
        bottleneck_dim=4,
        attention_dim=3,
        location_kernels=2,
        location_kernel_width=3,
        vocab_size=6,
        seed=3,
    )


@pytest.fixture
def tiny_lm_config() -> LmConfig:
    return LmConfig(vocab_size=6, embed_dim=3, width=4, n_layers=1, dropout=0.0, dropconnect=0.0, seed=1)


@pytest.fixture
def tiny_synth_config() -> SynthConfig:
    return SynthConfig(
        n_words=8,
        feature_dim=4,
        n_train=20,
        n_dev=6,
        n_test=6,
        n_speakers=3,
        utterances_per_recording=3,
        seed=5,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
