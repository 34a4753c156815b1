"""Transcript filters: word fragments, noise tokens and duplicate utterances."""

import logging
import re
from collections import Counter
from typing import Optional

from text.models import FilterSettings, Transcript, TranscriptCorpus

logger = logging.getLogger(__name__)

NOISE_PATTERN = re.compile(r"^\[[^\]]*\]$")

# Occurrence cap of the upstream duplicate filter.
UPSTREAM_DEDUP_MAX = 300

PRESETS: dict[str, FilterSettings] = {
    "none": FilterSettings(),
    "dup": FilterSettings(dedup_max=UPSTREAM_DEDUP_MAX),
    "noise": FilterSettings(drop_noise=True),
    "noise_dup": FilterSettings(drop_noise=True, dedup_max=UPSTREAM_DEDUP_MAX),
    "frag_noise": FilterSettings(drop_fragments=True, drop_noise=True),
    "frag_noise_dup": FilterSettings(drop_fragments=True, drop_noise=True, dedup_max=UPSTREAM_DEDUP_MAX),
}


def filter_preset(name: str) -> FilterSettings:
    """
    Look up a data-preparation preset.

    Raises:
        ValueError: If the preset is unknown
    """
    if name not in PRESETS:
        raise ValueError(f"Unknown preparation preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]


def is_fragment(word: str) -> bool:
    return len(word) > 1 and word.endswith("-")


def is_noise(word: str) -> bool:
    return bool(NOISE_PATTERN.match(word))


def filter_words(text: str, drop_fragments: bool, drop_noise: bool) -> str:
    words = text.split()
    if drop_fragments:
        words = [w for w in words if not is_fragment(w)]
    if drop_noise:
        words = [w for w in words if not is_noise(w)]
    return " ".join(words)


def filter_transcripts(
    corpus: TranscriptCorpus,
    drop_fragments: bool = False,
    drop_noise: bool = False,
    dedup_max: Optional[int] = None,
) -> TranscriptCorpus:
    """
    Apply the word filters, drop emptied utterances, then cap identical texts.

    With every filter off the corpus is returned unchanged.
    """
    if not drop_fragments and not drop_noise and dedup_max is None:
        return corpus

    kept: list[Transcript] = []
    seen: Counter[str] = Counter()
    emptied = duplicates = 0
    for utt in corpus.utterances:
        text = filter_words(utt.text, drop_fragments, drop_noise)
        if not text:
            emptied += 1
            continue
        seen[text] += 1
        if dedup_max is not None and seen[text] > dedup_max:
            duplicates += 1
            continue
        kept.append(utt.model_copy(update={"text": text}))
    logger.info(f"Kept {len(kept)}/{len(corpus)} utterances ({emptied} emptied, {duplicates} duplicates)")
    return TranscriptCorpus(utterances=kept)


def apply_preset(corpus: TranscriptCorpus, settings: FilterSettings) -> TranscriptCorpus:
    return filter_transcripts(corpus, settings.drop_fragments, settings.drop_noise, settings.dedup_max)
