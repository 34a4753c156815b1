"""
Input-level augmentation and the training feature pipeline.

Training order: tempo perturbation → sequence noise → speaker CMVN → Δ/ΔΔ →
SpecAugment. Evaluation runs CMVN and Δ/ΔΔ only.
"""

import logging
import math
from typing import Mapping, Optional, Sequence

import numpy as np

from config.models import AugmentPolicy
from features.models import FeatureSequence
from features.normalize import SpeakerStats, apply_cmvn

logger = logging.getLogger(__name__)

DELTA_WINDOW = 2


def _regression_delta(frames: np.ndarray, window: int = DELTA_WINDOW) -> np.ndarray:
    """Σ n·(x[t+n] − x[t−n]) / (2 Σ n²) with edge replication."""
    steps = frames.shape[0]
    t = np.arange(steps)
    numerator = np.zeros_like(frames, dtype=np.float64)
    for n in range(1, window + 1):
        ahead = frames[np.minimum(t + n, steps - 1)]
        behind = frames[np.maximum(t - n, 0)]
        numerator += n * (ahead - behind)
    return numerator / (2.0 * sum(n * n for n in range(1, window + 1)))


def add_deltas(seq: FeatureSequence, window: int = DELTA_WINDOW) -> FeatureSequence:
    """Stack [static, Δ, ΔΔ]; D → 3D."""
    delta = _regression_delta(seq.frames, window)
    delta2 = _regression_delta(delta, window)
    stacked = np.concatenate([seq.frames, delta, delta2], axis=1).astype(seq.frames.dtype)
    return seq.with_frames(stacked)


def tempo_perturb(seq: FeatureSequence, factor: float) -> FeatureSequence:
    """
    Resample the time axis to round(T / factor) frames by linear interpolation.

    Raises:
        ValueError: If factor <= 0
    """
    if factor <= 0:
        raise ValueError(f"tempo factor must be positive, got {factor}")
    if factor == 1.0:
        return seq
    steps = seq.n_frames
    new_steps = max(1, math.floor(steps / factor + 0.5))
    if new_steps == 1 or steps == 1:
        positions = np.zeros(new_steps)
    else:
        positions = np.arange(new_steps) * (steps - 1) / (new_steps - 1)
    low = np.floor(positions).astype(np.int64)
    high = np.minimum(low + 1, steps - 1)
    frac = (positions - low)[:, None]
    frames = seq.frames[low] * (1.0 - frac) + seq.frames[high] * frac
    return seq.with_frames(frames.astype(seq.frames.dtype))


def _align(noise: np.ndarray, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Randomly crop a longer noise sequence; tile a shorter one."""
    if noise.shape[0] > steps:
        offset = int(rng.integers(0, noise.shape[0] - steps + 1))
        return noise[offset : offset + steps]
    return noise[np.arange(steps) % noise.shape[0]]


def sequence_noise_inject(
    target: FeatureSequence,
    noise_pool: Sequence[FeatureSequence],
    weight: float,
    max_utts: int,
    rng: np.random.Generator,
) -> FeatureSequence:
    """
    target + weight · mean of 1…max_utts pool utterances aligned to the target length.

    Raises:
        ValueError: If the pool is empty or weight < 0
    """
    if weight < 0:
        raise ValueError(f"sequence noise weight must be >= 0, got {weight}")
    if not noise_pool:
        raise ValueError("sequence noise needs a non-empty noise pool")
    if weight == 0.0:
        return target
    count = min(int(rng.integers(1, max_utts + 1)), len(noise_pool))
    chosen = rng.choice(len(noise_pool), size=count, replace=False)
    aligned = [_align(noise_pool[int(k)].frames, target.n_frames, rng) for k in chosen]
    noise = np.mean(aligned, axis=0)
    return target.with_frames((target.frames + weight * noise).astype(target.frames.dtype))


def spec_augment(
    seq: FeatureSequence,
    policy: AugmentPolicy,
    rng: np.random.Generator,
    base_dim: Optional[int] = None,
) -> FeatureSequence:
    """
    Frequency and time masks filled with the per-utterance mean; no time warping.

    Frequency bands are drawn on the first `base_dim` coordinates and
    replicated across the Δ and ΔΔ blocks. Each time mask width is
    min(U{0…time_mask_param}, ⌈ratio · T⌉).
    """
    frames = seq.frames.copy()
    steps, dim = frames.shape
    base_dim = base_dim or dim
    if dim % base_dim:
        raise ValueError(f"feature dim {dim} is not a multiple of base dim {base_dim}")
    fill = seq.frames.mean(axis=0)

    for _ in range(policy.n_freq_masks):
        width = min(int(rng.integers(0, policy.freq_mask_param + 1)), base_dim)
        first = int(rng.integers(0, base_dim - width + 1))
        for block in range(0, dim, base_dim):
            cols = slice(block + first, block + first + width)
            frames[:, cols] = fill[cols]

    cap = math.ceil(policy.time_mask_ratio * steps)
    for _ in range(policy.n_time_masks):
        width = min(int(rng.integers(0, policy.time_mask_param + 1)), cap, steps)
        first = int(rng.integers(0, steps - width + 1))
        frames[first : first + width] = fill

    return seq.with_frames(frames)


class FeaturePipeline:
    """
    Turns stored features into network inputs.

    Attributes:
        policy: Augmentation probabilities and mask parameters
        stats: Speaker CMVN statistics (from the un-augmented training corpus)
        deltas: Whether Δ/ΔΔ are appended
        noise_pool: Utterances sequence noise is drawn from
    """

    def __init__(
        self,
        policy: AugmentPolicy,
        stats: Mapping[str, SpeakerStats],
        deltas: bool = True,
        noise_pool: Sequence[FeatureSequence] = (),
    ) -> None:
        self.policy = policy
        self.stats = stats
        self.deltas = deltas
        self.noise_pool = list(noise_pool)

    def prepare(self, seq: FeatureSequence) -> np.ndarray:
        """Evaluation features: CMVN then Δ/ΔΔ."""
        seq = apply_cmvn(seq, self.stats)
        if self.deltas:
            seq = add_deltas(seq)
        return seq.frames

    def augment(self, seq: FeatureSequence, rng: np.random.Generator) -> np.ndarray:
        """Training features with every enabled augmentation."""
        p = self.policy
        base_dim = seq.dim
        if rng.random() < p.speed_tempo_prob:
            factor = float(rng.choice(p.tempo_factors))
            seq = tempo_perturb(seq, factor)
        if rng.random() < p.seqnoise_prob:
            seq = sequence_noise_inject(seq, self.noise_pool, p.seqnoise_weight, p.seqnoise_max_utts, rng)
        seq = apply_cmvn(seq, self.stats)
        if self.deltas:
            seq = add_deltas(seq)
        seq = spec_augment(seq, p, rng, base_dim=base_dim)
        return seq.frames
