"""Data models for training."""

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from features.models import FeatureSequence

CurriculumMode = Literal["sorted", "bucketed"]


class ScheduleState(BaseModel):
    """Active training phases for one epoch."""

    epoch: int = Field(..., ge=1, description="1-based epoch")
    lr: float = Field(..., gt=0, description="Learning rate")
    batch_size: int = Field(..., ge=1, description="Utterances per batch")
    curriculum_mode: CurriculumMode = Field(..., description="Length-sorted or shuffled length buckets")
    weight_noise_on: bool = Field(False, description="Gaussian weight noise active")
    bn_frozen: bool = Field(False, description="Batch-norm running statistics frozen")
    label_smoothing: float = Field(0.0, ge=0, lt=1, description="Label smoothing ε")
    teacher_forcing: float = Field(1.0, ge=0, le=1, description="Probability of feeding the gold token")

    @property
    def phase(self) -> str:
        """Short human-readable summary of the active phases."""
        flags = [self.curriculum_mode]
        if self.weight_noise_on:
            flags.append("noise")
        if self.bn_frozen:
            flags.append("bn-frozen")
        if self.label_smoothing == 0.0:
            flags.append("no-ls")
        return "+".join(flags)


class EpochRecord(BaseModel):
    """One line of the training log."""

    epoch: int
    lr: float
    batch_size: int
    curriculum_mode: CurriculumMode
    weight_noise_on: bool
    bn_frozen: bool
    label_smoothing: float
    train_loss: float
    heldout_loss: Optional[float] = None
    token_error_rate: Optional[float] = None
    seconds: float = 0.0


class LmEpochRecord(BaseModel):
    """One line of the LM training log."""

    epoch: int
    lr: float
    label_smoothing: float
    train_loss: float
    heldout_ppl: Optional[float] = None
    seconds: float = 0.0


@dataclass
class OptimizerState:
    """Per-parameter Nesterov velocities with the momentum and L2 coefficient."""

    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class TrainingExample:
    """A feature sequence with its BPE token ids (without BOS/EOS) and text."""

    sequence: FeatureSequence
    tokens: np.ndarray
    text: str = ""

    @property
    def utterance_id(self) -> str:
        return self.sequence.utterance_id

    @property
    def n_frames(self) -> int:
        return self.sequence.n_frames
