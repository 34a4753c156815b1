"""Data models for decoding."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from network.lm import LmState
from network.model import DecoderState


@dataclass(slots=True)
class Hypothesis:
    """
    A partial or finished decode.

    `next_log_probs`/`next_attention` are the decoder's prediction for the
    token after `tokens`; `lm_next` is the LM's. `lm_state` is the LM state
    after the last non-EOS token.
    """

    tokens: tuple[int, ...]
    model_logp: float
    lm_logp: float
    coverage_mass: np.ndarray
    dec_state: Optional[DecoderState] = None
    next_log_probs: Optional[np.ndarray] = None
    next_attention: Optional[np.ndarray] = None
    lm_state: Optional[LmState] = None
    lm_next: Optional[np.ndarray] = None
    attention: list[np.ndarray] = field(default_factory=list)
    finished: bool = False
    score: float = 0.0

    @property
    def length(self) -> int:
        """Emitted tokens, EOS included."""
        return len(self.tokens)


class ScoreComponents(BaseModel):
    """Decomposition of a fusion score."""

    model: float = Field(..., description="Accumulated encoder-decoder log-probability")
    lm: float = Field(..., description="Accumulated LM log-probability (unweighted)")
    length: int = Field(..., description="Emitted tokens including EOS")
    coverage: int = Field(..., description="Encoder frames with attention mass ≥ threshold")
    total: float = Field(..., description="Fusion score")


class NBestEntry(BaseModel):
    """One line of an n-best file."""

    utterance_id: str
    rank: int = Field(..., ge=1)
    components: ScoreComponents
    tokens: list[int]
    text: str
    finished: bool = True
