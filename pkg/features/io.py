"""Feature archives with a manifest, and mono PCM WAV input."""

import csv
import logging
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.io import wavfile

from autodiff import load_tensors, save_tensors
from features.models import FeatureSequence, Waveform

logger = logging.getLogger(__name__)

MANIFEST_FIELDS = ["utterance_id", "speaker_id", "recording_id", "start", "end", "path"]


def save_feature_corpus(directory: Union[str, Path], name: str, corpus: Sequence[FeatureSequence]) -> Path:
    """
    Write `<name>.feats` (tensor archive keyed by utterance id) and
    `<name>.manifest.tsv`.

    Returns:
        Path of the manifest
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    archive = directory / f"{name}.feats"
    frame_shift = corpus[0].frame_shift if corpus else 0.01
    save_tensors(archive, {seq.utterance_id: seq.frames for seq in corpus}, {"frame_shift": frame_shift})

    manifest = directory / f"{name}.manifest.tsv"
    with open(manifest, "w", newline="") as f:
        writer = csv.writer(f, delimiter="\t")
        writer.writerow(MANIFEST_FIELDS)
        for seq in corpus:
            writer.writerow(
                [seq.utterance_id, seq.speaker_id, seq.recording_id, f"{seq.start_time:.3f}", f"{seq.end_time:.3f}", archive.name]
            )
    logger.info(f"Wrote {len(corpus)} feature sequences to {archive}")
    return manifest


def load_feature_corpus(manifest: Union[str, Path]) -> list[FeatureSequence]:
    """
    Read a manifest and the archives it references, in manifest order.

    Raises:
        FileNotFoundError: If the manifest or an archive is missing
        ValueError: If an utterance is missing from its archive
    """
    manifest = Path(manifest)
    archives: dict[str, tuple[dict[str, np.ndarray], dict]] = {}
    corpus: list[FeatureSequence] = []
    with open(manifest, newline="") as f:
        for row in csv.DictReader(f, delimiter="\t"):
            path = row["path"]
            if path not in archives:
                archives[path] = load_tensors(manifest.parent / path)
            tensors, metadata = archives[path]
            if row["utterance_id"] not in tensors:
                raise ValueError(f"{path} has no features for {row['utterance_id']}")
            corpus.append(
                FeatureSequence(
                    frames=tensors[row["utterance_id"]],
                    utterance_id=row["utterance_id"],
                    speaker_id=row["speaker_id"],
                    recording_id=row["recording_id"],
                    start_time=float(row["start"]),
                    end_time=float(row["end"]),
                    frame_shift=float(metadata.get("frame_shift", 0.01)),
                )
            )
    return corpus


def read_wav(path: Union[str, Path]) -> Waveform:
    """
    Read a mono PCM WAV file; integer samples are scaled to [-1, 1).

    Raises:
        ValueError: If the file has more than one channel
    """
    rate, samples = wavfile.read(str(path))
    if samples.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {samples.shape[1]} channels")
    if np.issubdtype(samples.dtype, np.integer):
        samples = samples / float(np.iinfo(samples.dtype).max + 1)
    return Waveform(samples=samples, sample_rate=int(rate))


def write_wav(path: Union[str, Path], wave: Waveform) -> Path:
    """Write 16-bit PCM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(wave.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), wave.sample_rate, pcm)
    return path
