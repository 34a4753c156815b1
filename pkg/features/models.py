"""Data models for acoustic features."""

from dataclasses import dataclass, replace

import numpy as np


@dataclass
class Waveform:
    """Mono signal with its sample rate (Hz)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("Waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FeatureSequence:
    """
    Time-major feature matrix (T, D) with frame metadata.

    Attributes:
        frames: Feature values, T ≥ 1
        frame_shift: Seconds between frames
        utterance_id: Unique utterance identifier
        speaker_id: Speaker the CMVN statistics are pooled over
        recording_id: Recording (conversation side) the utterance comes from
        start_time: Start within the recording (seconds)
        end_time: End within the recording (seconds)
    """

    frames: np.ndarray
    utterance_id: str = ""
    speaker_id: str = ""
    recording_id: str = ""
    start_time: float = 0.0
    end_time: float = 0.0
    frame_shift: float = 0.01

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError(f"{self.utterance_id or 'sequence'}: frames must be (T >= 1, D), got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError(f"{self.utterance_id or 'sequence'}: frames contain non-finite values")
        if self.end_time <= self.start_time:
            self.end_time = self.start_time + self.frames.shape[0] * self.frame_shift

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time

    def with_frames(self, frames: np.ndarray) -> "FeatureSequence":
        """Same metadata, new frames; the end time follows a changed length."""
        frames = np.asarray(frames)
        if frames.shape[0] == self.n_frames:
            return replace(self, frames=frames)
        return replace(self, frames=frames, end_time=self.start_time + frames.shape[0] * self.frame_shift)
