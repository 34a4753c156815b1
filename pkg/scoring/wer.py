"""Levenshtein alignment with unit costs."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Sequence, TypeVar

import numpy as np

from scoring.models import ScoreReport, UtteranceScore
from text.models import WORD_BOUNDARY

logger = logging.getLogger(__name__)

T = TypeVar("T")


def normalize_words(text: str) -> list[str]:
    """Lowercase and split into words, treating the subword boundary marker as a space."""
    return text.replace(WORD_BOUNDARY, " ").lower().split()


def edit_distance(ref: Sequence[T], hyp: Sequence[T]) -> tuple[int, int, int]:
    """
    Minimal-cost alignment of `hyp` against `ref`.

    Among optimal alignments the backtrace prefers a substitution (or match),
    then an insertion, then a deletion.

    Returns:
        (substitutions, deletions, insertions)
    """
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diagonal = cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            cost[i, j] = min(diagonal, cost[i, j - 1] + 1, cost[i - 1, j] + 1)

    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += int(ref[i - 1] != hyp[j - 1])
            i, j = i - 1, j - 1
        elif j > 0 and cost[i, j] == cost[i, j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dels += 1
            i -= 1
    return subs, dels, ins


def score_utterance(utterance_id: str, reference: str, hypothesis: str) -> UtteranceScore:
    ref, hyp = normalize_words(reference), normalize_words(hypothesis)
    subs, dels, ins = edit_distance(ref, hyp)
    return UtteranceScore(
        utterance_id=utterance_id,
        n_ref=len(ref),
        substitutions=subs,
        deletions=dels,
        insertions=ins,
        reference=" ".join(ref),
        hypothesis=" ".join(hyp),
    )


def score_corpus(references: Mapping[str, str], hypotheses: Mapping[str, str], workers: int = 1) -> ScoreReport:
    """
    Score every reference utterance against its hypothesis.

    References without a hypothesis are scored as empty output (all
    deletions) and listed in `missing`; hypotheses without a reference are
    ignored.
    """
    missing = [u for u in references if u not in hypotheses]
    if missing:
        logger.warning(f"{len(missing)} reference utterances have no hypothesis; scoring them as empty")
    extra = len(set(hypotheses) - set(references))
    if extra:
        logger.warning(f"Ignoring {extra} hypotheses without a reference")
    ids = list(references)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        scores = list(pool.map(lambda u: score_utterance(u, references[u], hypotheses.get(u, "")), ids))
    return ScoreReport(utterances=scores, missing=missing)


def token_error_rate(references: Sequence[Sequence[int]], hypotheses: Sequence[Sequence[int]]) -> float:
    """Edit distance over token ids divided by the reference token count."""
    if len(references) != len(hypotheses):
        raise ValueError(f"{len(references)} references but {len(hypotheses)} hypotheses")
    errors = sum(sum(edit_distance(list(r), list(h))) for r, h in zip(references, hypotheses))
    total = sum(len(r) for r in references)
    return errors / total if total else 0.0
