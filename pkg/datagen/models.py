"""Records of the synthetic corpus."""

from dataclasses import dataclass, field

import numpy as np

from features.models import FeatureSequence
from text.models import TranscriptCorpus


@dataclass
class Lexicon:
    """
    Pseudo-words with their frame prototypes and word bigram.

    `bigram[0]` is the distribution of the first word of an utterance;
    `bigram[k + 1]` is the distribution following word k.
    """

    words: list[str]
    prototypes: np.ndarray
    bigram: np.ndarray

    def __len__(self) -> int:
        return len(self.words)

    def text(self, word_ids: list[int]) -> str:
        return " ".join(self.words[k] for k in word_ids)


@dataclass
class SpeakerTransform:
    """Per-dimension gain and offset applied to every frame of one speaker."""

    speaker_id: str
    scale: np.ndarray
    shift: np.ndarray

    def apply(self, frames: np.ndarray) -> np.ndarray:
        return frames * self.scale + self.shift


@dataclass
class SyntheticUtterance:
    utterance_id: str
    speaker_id: str
    recording_id: str
    word_ids: list[int]
    start_time: float = 0.0


@dataclass
class SyntheticSplit:
    """Features, transcripts and frame-level word labels of one split."""

    name: str
    features: list[FeatureSequence]
    transcripts: TranscriptCorpus
    labels: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class SyntheticCorpus:
    lexicon: Lexicon
    speakers: dict[str, SpeakerTransform]
    splits: dict[str, SyntheticSplit]
