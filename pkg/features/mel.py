"""Log-mel filterbank features (HTK mel scale, Hamming window)."""

import logging
from typing import Optional

import numpy as np

from features.models import FeatureSequence, Waveform

logger = logging.getLogger(__name__)

ENERGY_FLOOR = 1e-10


def hz_to_mel(hz: np.ndarray | float) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel: np.ndarray | float) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def filter_centers(n_mels: int, sample_rate: int, low_hz: float = 0.0, high_hz: Optional[float] = None) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter."""
    high_hz = high_hz if high_hz is not None else sample_rate / 2.0
    points = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_mels + 2))
    return points[1:-1]


def mel_filterbank(
    n_mels: int,
    n_fft: int,
    sample_rate: int,
    low_hz: float = 0.0,
    high_hz: Optional[float] = None,
) -> np.ndarray:
    """
    Triangular filters evenly spaced on the mel scale.

    Returns:
        Weights (n_mels, n_fft // 2 + 1)
    """
    high_hz = high_hz if high_hz is not None else sample_rate / 2.0
    points = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    left, center, right = points[:-2, None], points[1:-1, None], points[2:, None]
    rising = (freqs[None, :] - left) / (center - left)
    falling = (right - freqs[None, :]) / (right - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def frame_count(n_samples: int, win_length: int, hop_length: int) -> int:
    """floor((N − win) / hop) + 1."""
    return (n_samples - win_length) // hop_length + 1


def log_mel(
    wave: Waveform,
    n_mels: int = 80,
    win: float = 0.025,
    hop: float = 0.010,
    n_fft: int = 512,
    floor: float = ENERGY_FLOOR,
    utterance_id: str = "",
    speaker_id: str = "",
    recording_id: str = "",
    start_time: float = 0.0,
) -> FeatureSequence:
    """
    Log mel-filterbank energies of a waveform.

    Each frame is log(filterbank · |FFT(hamming · frame)|² + floor).

    Raises:
        ValueError: If the signal is shorter than one window
    """
    win_length = int(round(win * wave.sample_rate))
    hop_length = int(round(hop * wave.sample_rate))
    if win_length < 1 or hop_length < 1:
        raise ValueError(f"Window {win}s / hop {hop}s is below one sample at {wave.sample_rate} Hz")
    if len(wave.samples) < win_length:
        raise ValueError(f"Signal of {len(wave.samples)} samples is shorter than one {win_length}-sample window")
    while n_fft < win_length:
        n_fft *= 2

    count = frame_count(len(wave.samples), win_length, hop_length)
    starts = np.arange(count)[:, None] * hop_length
    frames = wave.samples[starts + np.arange(win_length)[None, :]] * np.hamming(win_length)
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=-1)) ** 2
    energies = power @ mel_filterbank(n_mels, n_fft, wave.sample_rate).T
    logger.debug(f"{utterance_id or 'wave'}: {count} frames of {n_mels} mels")
    return FeatureSequence(
        frames=np.log(energies + floor),
        utterance_id=utterance_id,
        speaker_id=speaker_id,
        recording_id=recording_id,
        start_time=start_time,
        end_time=start_time + wave.duration,
        frame_shift=hop,
    )
