"""Curriculum batching and padding."""

import logging
from typing import Sequence

import numpy as np

from autodiff import derive_rng
from network.model import BOS, EOS, Batch
from training.models import ScheduleState, TrainingExample

logger = logging.getLogger(__name__)


def make_batches(lengths: Sequence[int], schedule: ScheduleState, seed: int = 0) -> list[list[int]]:
    """
    Partition utterance indices into batches.

    Both modes cut the stably length-sorted order into `batch_size` chunks.
    "sorted" keeps them in ascending order; "bucketed" shuffles the chunk
    order with a stream derived from (seed, epoch).
    """
    order = np.argsort(np.asarray(lengths), kind="stable")
    size = schedule.batch_size
    batches = [order[i : i + size].tolist() for i in range(0, len(order), size)]
    if schedule.curriculum_mode == "bucketed":
        permutation = derive_rng(seed, "batches", schedule.epoch).permutation(len(batches))
        batches = [batches[k] for k in permutation]
    logger.debug(f"Epoch {schedule.epoch}: {len(batches)} {schedule.curriculum_mode} batches of up to {size}")
    return batches


def collate(frames: Sequence[np.ndarray], examples: Sequence[TrainingExample]) -> Batch:
    """
    Pad (possibly augmented) frame matrices and BOS/EOS-framed targets.

    Args:
        frames: Feature matrices (T_i, D), one per example
        examples: The examples whose tokens and ids go with `frames`
    """
    if not frames:
        raise ValueError("Cannot collate an empty batch")
    dim = frames[0].shape[1]
    feature_lengths = np.array([f.shape[0] for f in frames], dtype=np.int64)
    features = np.zeros((len(frames), int(feature_lengths.max()), dim), dtype=frames[0].dtype)
    for row, f in enumerate(frames):
        features[row, : f.shape[0]] = f

    framed = [np.concatenate([[BOS], np.asarray(ex.tokens, dtype=np.int64), [EOS]]) for ex in examples]
    token_lengths = np.array([len(t) for t in framed], dtype=np.int64)
    tokens = np.full((len(framed), int(token_lengths.max())), EOS, dtype=np.int64)
    for row, t in enumerate(framed):
        tokens[row, : len(t)] = t
    return Batch(features, feature_lengths, tokens, token_lengths, [ex.utterance_id for ex in examples])
