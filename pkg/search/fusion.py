"""Shallow-fusion scoring."""

import numpy as np

from config.models import FusionWeights
from search.models import Hypothesis, ScoreComponents


def coverage(mass: np.ndarray, threshold: float) -> int:
    """Number of encoder frames whose accumulated attention mass reaches `threshold`."""
    return int(np.count_nonzero(np.asarray(mass) >= threshold))


def fusion_score(h: Hypothesis, w: FusionWeights) -> float:
    """log P_model + λ·log P_lm + β·length + γ·coverage."""
    return (
        h.model_logp
        + w.lm_weight * h.lm_logp
        + w.length_reward * h.length
        + w.coverage_weight * coverage(h.coverage_mass, w.coverage_threshold)
    )


def score_components(h: Hypothesis, w: FusionWeights) -> ScoreComponents:
    return ScoreComponents(
        model=h.model_logp,
        lm=h.lm_logp,
        length=h.length,
        coverage=coverage(h.coverage_mass, w.coverage_threshold),
        total=fusion_score(h, w),
    )
