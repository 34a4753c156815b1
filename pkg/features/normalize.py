"""Speaker-level mean and variance normalization."""

import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from autodiff import load_tensors, save_tensors
from features.models import FeatureSequence

logger = logging.getLogger(__name__)

VARIANCE_GUARD = 1e-12


@dataclass
class SpeakerStats:
    """Per-dimension mean and scale of one speaker's pooled frames."""

    mean: np.ndarray
    scale: np.ndarray


def speaker_statistics(corpus: Sequence[FeatureSequence]) -> dict[str, SpeakerStats]:
    """
    Pool frames per speaker and compute mean and standard deviation.

    Dimensions with (near) zero variance get scale 1 so they are only centered.

    Raises:
        ValueError: If a speaker has fewer than two frames
    """
    pooled: dict[str, list[np.ndarray]] = defaultdict(list)
    for seq in corpus:
        pooled[seq.speaker_id].append(seq.frames)

    stats: dict[str, SpeakerStats] = {}
    for speaker, chunks in pooled.items():
        frames = np.concatenate(chunks).astype(np.float64)
        if frames.shape[0] < 2:
            raise ValueError(f"Speaker {speaker!r} has {frames.shape[0]} frame(s); CMVN needs at least 2")
        mean = frames.mean(axis=0)
        var = frames.var(axis=0)
        flat = var <= VARIANCE_GUARD
        if flat.any():
            logger.warning(f"Speaker {speaker!r}: {int(flat.sum())} constant dimension(s) centered only")
        stats[speaker] = SpeakerStats(mean=mean, scale=np.where(flat, 1.0, np.sqrt(var)))
    return stats


def apply_cmvn(seq: FeatureSequence, stats: Mapping[str, SpeakerStats]) -> FeatureSequence:
    """
    Normalize one sequence with its speaker's statistics.

    Raises:
        KeyError: If the speaker has no statistics
    """
    speaker = stats[seq.speaker_id]
    normalized = (seq.frames - speaker.mean) / speaker.scale
    return seq.with_frames(normalized.astype(seq.frames.dtype))


def speaker_cmvn(corpus: Sequence[FeatureSequence]) -> list[FeatureSequence]:
    """Mean 0, variance 1 per speaker and dimension over that speaker's frames."""
    stats = speaker_statistics(corpus)
    return [apply_cmvn(seq, stats) for seq in corpus]


def save_speaker_stats(path: Union[str, Path], stats: Mapping[str, SpeakerStats]) -> Path:
    """Archive keyed `<speaker>/mean` and `<speaker>/scale`."""
    tensors: dict[str, np.ndarray] = {}
    for speaker, s in stats.items():
        tensors[f"{speaker}/mean"] = s.mean
        tensors[f"{speaker}/scale"] = s.scale
    return save_tensors(path, tensors, {"kind": "cmvn", "speakers": sorted(stats)})


def load_speaker_stats(path: Union[str, Path]) -> dict[str, SpeakerStats]:
    tensors, metadata = load_tensors(path)
    return {s: SpeakerStats(mean=tensors[f"{s}/mean"], scale=tensors[f"{s}/scale"]) for s in metadata["speakers"]}
