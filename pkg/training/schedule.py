"""
Staged training schedule.

Breakpoints are given for a reference budget (250 epochs) and scale with the
configured budget, so short runs pass through every phase:

- warmup: learning rate rises linearly and the batch size grows from
  `batch_start` to `batch_end`
- curriculum: length-sorted batches, then shuffled length buckets
- weight noise after `weight_noise_after`
- batch-norm statistics frozen after `bn_freeze_after`
- after `anneal_after`: lr decays by `lr_decay` per epoch, label smoothing off
"""

import logging
from typing import Optional

from pydantic import BaseModel

from config.models import RecipeSwitches, TrainingConfig
from training.models import ScheduleState

logger = logging.getLogger(__name__)


class Breakpoints(BaseModel):
    """Phase boundaries scaled to an epoch budget."""

    warmup: int
    curriculum: int
    weight_noise: int
    bn_freeze: int
    anneal: int


def scale_epoch(point: int, total: int, reference: int) -> int:
    """point · total / reference, rounded half up."""
    return (2 * point * total + reference) // (2 * reference)


def breakpoints(config: TrainingConfig, total_epochs: Optional[int] = None) -> Breakpoints:
    total = total_epochs or config.epochs
    ref = config.reference_epochs
    return Breakpoints(
        warmup=max(1, scale_epoch(config.warmup_at, total, ref)),
        curriculum=scale_epoch(config.curriculum_until, total, ref),
        weight_noise=scale_epoch(config.weight_noise_after, total, ref),
        bn_freeze=scale_epoch(config.bn_freeze_after, total, ref),
        anneal=scale_epoch(config.anneal_after, total, ref),
    )


def schedule_at(
    epoch: int,
    config: TrainingConfig,
    total_epochs: Optional[int] = None,
    recipe: Optional[RecipeSwitches] = None,
) -> ScheduleState:
    """
    Schedule of a 1-based epoch.

    Args:
        epoch: Epoch number (≥ 1)
        config: Schedule constants
        total_epochs: Budget the breakpoints scale to (config.epochs by default)
        recipe: Ingredient switches; disabled ingredients never activate

    Raises:
        ValueError: If epoch < 1
    """
    if epoch < 1:
        raise ValueError(f"epoch must be >= 1, got {epoch}")
    recipe = recipe or RecipeSwitches()
    points = breakpoints(config, total_epochs)

    if epoch <= points.warmup:
        lr = config.base_lr * epoch / points.warmup
        batch_size = config.batch_start + (config.batch_end - config.batch_start) * (epoch - 1) // points.warmup
    else:
        lr = config.base_lr
        batch_size = config.batch_end

    annealing = epoch > points.anneal
    if annealing:
        lr = config.base_lr * config.lr_decay ** (epoch - points.anneal)

    if not recipe.random_batches:
        mode = "sorted"
    elif not recipe.curriculum:
        mode = "bucketed"
    else:
        mode = "sorted" if epoch <= points.curriculum else "bucketed"

    return ScheduleState(
        epoch=epoch,
        lr=lr,
        batch_size=batch_size,
        curriculum_mode=mode,
        weight_noise_on=recipe.weight_noise and epoch > points.weight_noise,
        bn_frozen=recipe.bn_freezing and epoch > points.bn_freeze,
        label_smoothing=config.label_smoothing if recipe.label_smoothing and not annealing else 0.0,
        teacher_forcing=config.teacher_forcing if recipe.scheduled_sampling else 1.0,
    )


def schedule_trace(config: TrainingConfig, recipe: Optional[RecipeSwitches] = None) -> list[ScheduleState]:
    """Schedule of every epoch of the configured budget."""
    return [schedule_at(epoch, config, recipe=recipe) for epoch in range(1, config.epochs + 1)]
