"""Acoustic features: extraction, normalization and augmentation."""

from features.augment import FeaturePipeline, add_deltas, sequence_noise_inject, spec_augment, tempo_perturb
from features.io import load_feature_corpus, read_wav, save_feature_corpus, write_wav
from features.mel import log_mel, mel_filterbank
from features.models import FeatureSequence, Waveform
from features.normalize import (
    SpeakerStats,
    apply_cmvn,
    load_speaker_stats,
    save_speaker_stats,
    speaker_cmvn,
    speaker_statistics,
)

__all__ = [
    "FeaturePipeline",
    "FeatureSequence",
    "SpeakerStats",
    "Waveform",
    "add_deltas",
    "apply_cmvn",
    "load_feature_corpus",
    "load_speaker_stats",
    "log_mel",
    "mel_filterbank",
    "read_wav",
    "save_feature_corpus",
    "save_speaker_stats",
    "sequence_noise_inject",
    "spec_augment",
    "speaker_cmvn",
    "speaker_statistics",
    "tempo_perturb",
    "write_wav",
]
