"""Synthetic corpus generation."""

from datagen.models import Lexicon, SpeakerTransform, SyntheticCorpus, SyntheticSplit, SyntheticUtterance
from datagen.synth import (
    cross_utterance_entropy,
    generate,
    make_lexicon,
    nearest_prototype,
    render_frames,
    write_corpus,
)

__all__ = [
    "Lexicon",
    "SpeakerTransform",
    "SyntheticCorpus",
    "SyntheticSplit",
    "SyntheticUtterance",
    "cross_utterance_entropy",
    "generate",
    "make_lexicon",
    "nearest_prototype",
    "render_frames",
    "write_corpus",
]
