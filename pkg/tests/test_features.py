"""Tests for feature extraction, normalization, augmentation and archives."""

import math

import numpy as np
import pytest

from config.models import AugmentPolicy
from features import (
    FeaturePipeline,
    FeatureSequence,
    Waveform,
    add_deltas,
    apply_cmvn,
    load_feature_corpus,
    load_speaker_stats,
    log_mel,
    read_wav,
    save_feature_corpus,
    save_speaker_stats,
    sequence_noise_inject,
    spec_augment,
    speaker_cmvn,
    speaker_statistics,
    tempo_perturb,
    write_wav,
)
from features.mel import ENERGY_FLOOR, filter_centers


def _seq(frames, speaker: str = "s1", utt: str = "u1") -> FeatureSequence:
    return FeatureSequence(frames=np.asarray(frames, dtype=np.float64), utterance_id=utt, speaker_id=speaker)


def _quiet_policy(**updates) -> AugmentPolicy:
    values = dict(speed_tempo_prob=0.0, seqnoise_prob=0.0, n_freq_masks=0, n_time_masks=0)
    values.update(updates)
    return AugmentPolicy(**values)


class TestLogMel:
    """Tests for log-mel extraction."""

    def test_frame_count(self):
        """Test 1 s at 16 kHz with 25 ms windows and 10 ms hops gives 98 frames."""
        features = log_mel(Waveform(np.random.default_rng(0).standard_normal(16000), 16000))
        assert features.frames.shape == (98, 80)

    def test_silence_hits_the_floor(self):
        """Test an all-zero signal gives log(floor) everywhere."""
        features = log_mel(Waveform(np.zeros(8000), 16000), n_mels=20)
        np.testing.assert_allclose(features.frames, math.log(ENERGY_FLOOR))

    @pytest.mark.parametrize("k", [15, 25, 35])
    def test_sine_peaks_in_its_filter(self, k):
        """Test a sine at the center of filter k peaks in mel bin k."""
        rate = 16000
        center = filter_centers(40, rate)[k]
        t = np.arange(rate // 2) / rate
        features = log_mel(Waveform(np.sin(2 * np.pi * center * t), rate), n_mels=40)
        assert np.all(features.frames.argmax(axis=1) == k)

    def test_short_signal(self):
        """Test a signal shorter than one window is rejected."""
        with pytest.raises(ValueError):
            log_mel(Waveform(np.zeros(100), 16000))


class TestSpeakerCmvn:
    """Tests for speaker-level mean and variance normalization."""

    def test_zero_mean_unit_variance(self):
        """Test every speaker's pooled frames are standardized per dimension."""
        rng = np.random.default_rng(0)
        corpus = [
            _seq(rng.standard_normal((6, 3)) * 5 + 2, "a", "a1"),
            _seq(rng.standard_normal((4, 3)) * 5 + 2, "a", "a2"),
            _seq(rng.standard_normal((7, 3)) * 0.1 - 8, "b", "b1"),
        ]
        normalized = speaker_cmvn(corpus)
        for speaker in ("a", "b"):
            pooled = np.concatenate([s.frames for s in normalized if s.speaker_id == speaker])
            assert np.all(np.abs(pooled.mean(axis=0)) < 1e-6)
            assert np.all(np.abs(pooled.var(axis=0) - 1) < 1e-6)

    def test_affine_speakers_become_identical(self):
        """Test speakers differing by a per-dimension affine map normalize to the same frames."""
        base = np.random.default_rng(1).standard_normal((10, 4))
        scaled = base * np.array([2.0, 0.5, 3.0, 1.5]) + np.array([1.0, -2.0, 0.0, 4.0])
        a, b = speaker_cmvn([_seq(base, "a", "x"), _seq(scaled, "b", "y")])
        np.testing.assert_allclose(a.frames, b.frames, atol=1e-10)

    def test_constant_dimension_is_only_centered(self):
        """Test a zero-variance dimension is centered, not divided."""
        frames = np.column_stack([np.full(5, 3.0), np.arange(5.0)])
        (normalized,) = speaker_cmvn([_seq(frames)])
        np.testing.assert_array_equal(normalized.frames[:, 0], np.zeros(5))

    def test_idempotent(self):
        """Test normalizing twice equals normalizing once."""
        corpus = [_seq(np.random.default_rng(2).standard_normal((8, 3)) * 4 + 1)]
        once = speaker_cmvn(corpus)
        np.testing.assert_allclose(speaker_cmvn(once)[0].frames, once[0].frames, atol=1e-6)

    def test_single_frame_speaker(self):
        """Test a speaker with one frame is rejected."""
        with pytest.raises(ValueError):
            speaker_statistics([_seq(np.ones((1, 2)))])

    def test_statistics_archive(self, tmp_path):
        """Test stored statistics normalize identically after reloading."""
        seq = _seq(np.random.default_rng(3).standard_normal((5, 2)))
        stats = speaker_statistics([seq])
        loaded = load_speaker_stats(save_speaker_stats(tmp_path / "cmvn.stats", stats))
        np.testing.assert_array_equal(apply_cmvn(seq, loaded).frames, apply_cmvn(seq, stats).frames)


class TestDeltas:
    """Tests for Δ/ΔΔ stacking."""

    def test_constant_has_zero_derivatives(self):
        """Test a constant sequence has zero Δ and ΔΔ."""
        out = add_deltas(_seq(np.full((6, 2), 7.0)))
        np.testing.assert_array_equal(out.frames[:, 2:], 0.0)

    def test_ramp_slope(self):
        """Test interior Δ frames of x_t = a·t equal a."""
        ramp = 1.5 * np.arange(10.0)[:, None]
        out = add_deltas(_seq(ramp))
        np.testing.assert_allclose(out.frames[2:-2, 1], 1.5)

    def test_triples_dimension(self):
        """Test 80 dims become 240."""
        assert add_deltas(_seq(np.zeros((3, 80)))).dim == 240


class TestTempoPerturb:
    """Tests for time-axis resampling."""

    def test_identity(self):
        """Test factor 1 returns the sequence unchanged."""
        seq = _seq(np.random.default_rng(0).standard_normal((5, 2)))
        assert tempo_perturb(seq, 1.0) is seq

    def test_slow_down_length(self):
        """Test T=100 at factor 0.9 becomes 111 frames."""
        assert tempo_perturb(_seq(np.zeros((100, 3))), 0.9).n_frames == 111

    def test_constant_stays_constant(self):
        """Test resampling a constant sequence keeps it constant."""
        out = tempo_perturb(_seq(np.full((20, 2), 4.0)), 1.1)
        np.testing.assert_allclose(out.frames, 4.0)

    def test_non_positive_factor(self):
        """Test factor ≤ 0 is rejected."""
        with pytest.raises(ValueError):
            tempo_perturb(_seq(np.zeros((3, 1))), 0.0)


class TestSequenceNoise:
    """Tests for sequence noise injection."""

    def test_zero_weight_is_identity(self):
        """Test weight 0 leaves the target unchanged."""
        seq = _seq(np.ones((4, 2)))
        assert sequence_noise_inject(seq, [seq], 0.0, 4, np.random.default_rng(0)) is seq

    def test_self_noise_scales_target(self):
        """Test mixing the target into itself with weight w gives (1 + w)·target."""
        seq = _seq(np.random.default_rng(1).standard_normal((6, 3)))
        out = sequence_noise_inject(seq, [seq], 0.3, 4, np.random.default_rng(0))
        np.testing.assert_allclose(out.frames, 1.3 * seq.frames)

    def test_short_noise_is_tiled(self):
        """Test a shorter noise utterance is repeated to the target length."""
        target = _seq(np.zeros((5, 1)))
        noise = _seq(np.array([[1.0], [2.0]]), utt="n")
        out = sequence_noise_inject(target, [noise], 1.0, 1, np.random.default_rng(0))
        np.testing.assert_array_equal(out.frames[:, 0], [1, 2, 1, 2, 1])

    def test_empty_pool(self):
        """Test an empty pool is rejected."""
        with pytest.raises(ValueError):
            sequence_noise_inject(_seq(np.ones((2, 1))), [], 0.4, 4, np.random.default_rng(0))

    def test_application_rate(self):
        """Test the pipeline applies noise to 38-42% of 10000 utterances at probability 0.4."""
        seq = _seq(np.zeros((3, 2)))
        pool = [_seq(np.ones((3, 2)), utt="n")]
        stats = {"s1": speaker_statistics([_seq(np.arange(6.0).reshape(3, 2))])["s1"]}
        pipeline = FeaturePipeline(_quiet_policy(seqnoise_prob=0.4, seqnoise_weight=1.0), stats, deltas=False, noise_pool=pool)
        clean = pipeline.prepare(seq)
        rng = np.random.default_rng(0)
        applied = sum(not np.array_equal(pipeline.augment(seq, rng), clean) for _ in range(10000))
        assert 0.38 <= applied / 10000 <= 0.42


class TestSpecAugment:
    """Tests for frequency and time masking."""

    def test_empty_masks_are_identity(self):
        """Test zero mask parameters leave the features unchanged."""
        seq = _seq(np.random.default_rng(0).standard_normal((10, 4)))
        policy = AugmentPolicy(freq_mask_param=0, time_mask_param=0)
        np.testing.assert_array_equal(spec_augment(seq, policy, np.random.default_rng(1)).frames, seq.frames)

    def test_single_frequency_band(self):
        """Test one frequency mask with F=2 replaces one contiguous band of at most 2 channels."""
        seq = _seq(np.random.default_rng(0).standard_normal((10, 8)))
        policy = _quiet_policy(n_freq_masks=1, freq_mask_param=2)
        for seed in range(50):
            out = spec_augment(seq, policy, np.random.default_rng(seed)).frames
            changed = np.flatnonzero((out != seq.frames).any(axis=0))
            assert len(changed) <= 2
            if len(changed) == 2:
                assert changed[1] == changed[0] + 1

    def test_band_replicated_across_delta_blocks(self):
        """Test a frequency band drawn on the static block repeats in the Δ and ΔΔ blocks."""
        seq = _seq(np.random.default_rng(0).standard_normal((10, 9)))
        policy = _quiet_policy(n_freq_masks=1, freq_mask_param=3)
        out = spec_augment(seq, policy, np.random.default_rng(3), base_dim=3).frames
        changed = (out != seq.frames).any(axis=0)
        np.testing.assert_array_equal(changed[:3], changed[3:6])
        np.testing.assert_array_equal(changed[:3], changed[6:])

    def test_time_mask_width_cap(self):
        """Test T=10 with p=0.3 never masks more than 3 frames."""
        seq = _seq(np.random.default_rng(0).standard_normal((10, 4)))
        policy = _quiet_policy(n_time_masks=1, time_mask_param=70, time_mask_ratio=0.3)
        for seed in range(200):
            out = spec_augment(seq, policy, np.random.default_rng(seed)).frames
            assert int((out != seq.frames).any(axis=1).sum()) <= 3

    def test_masked_fraction_matches_expectation(self):
        """Test the mean masked fraction of one time mask matches E[width]/T within 10%."""
        steps = 100
        seq = _seq(np.random.default_rng(0).standard_normal((steps, 2)))
        policy = _quiet_policy(n_time_masks=1, time_mask_param=20, time_mask_ratio=1.0)
        fractions = [
            (spec_augment(seq, policy, np.random.default_rng(seed)).frames != seq.frames).any(axis=1).mean()
            for seed in range(1000)
        ]
        assert np.mean(fractions) == pytest.approx(10 / steps, rel=0.1)


class TestFeaturePipeline:
    """Tests for the training feature pipeline."""

    def test_no_augmentation_matches_evaluation(self):
        """Test zero probabilities and no masks give the evaluation features bit-exactly."""
        seq = _seq(np.random.default_rng(0).standard_normal((12, 3)))
        stats = speaker_statistics([seq])
        pipeline = FeaturePipeline(_quiet_policy(), stats)
        np.testing.assert_array_equal(pipeline.augment(seq, np.random.default_rng(5)), pipeline.prepare(seq))

    def test_augmentation_preserves_dimension(self):
        """Test every augmentation keeps the stacked feature width."""
        seq = _seq(np.random.default_rng(0).standard_normal((30, 4)))
        pipeline = FeaturePipeline(AugmentPolicy(speed_tempo_prob=1.0, tempo_factors=[0.9]), speaker_statistics([seq]), noise_pool=[seq])
        out = pipeline.augment(seq, np.random.default_rng(0))
        assert out.shape == (33, 12)


class TestFeatureIo:
    """Tests for feature archives and WAV files."""

    def test_corpus_archive(self, tmp_path):
        """Test sequences and their metadata survive the archive in manifest order."""
        corpus = [
            FeatureSequence(np.ones((3, 2)), "r1_00", "spk0", "r1", 0.0, 0.03),
            FeatureSequence(np.zeros((2, 2)), "r1_01", "spk0", "r1", 0.5, 0.52),
        ]
        loaded = load_feature_corpus(save_feature_corpus(tmp_path, "dev", corpus))
        assert [s.utterance_id for s in loaded] == ["r1_00", "r1_01"]
        assert loaded[1].start_time == 0.5 and loaded[1].recording_id == "r1"
        np.testing.assert_array_equal(loaded[0].frames, corpus[0].frames)

    def test_wav(self, tmp_path):
        """Test 16-bit PCM keeps samples within quantization error."""
        wave = Waveform(np.sin(np.linspace(0, 20, 800)) * 0.5, 8000)
        loaded = read_wav(write_wav(tmp_path / "a.wav", wave))
        assert loaded.sample_rate == 8000
        np.testing.assert_allclose(loaded.samples, wave.samples, atol=1 / 32768)
