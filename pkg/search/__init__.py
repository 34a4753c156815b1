"""Beam search with shallow fusion and decoding outputs."""

from search.beam import DecodeItem, beam_search, carry_lm_state, decode_corpus, greedy_search, greedy_weights
from search.fusion import coverage, fusion_score, score_components
from search.io import nbest_entries, read_hypotheses, write_hypotheses, write_nbest
from search.models import Hypothesis, NBestEntry, ScoreComponents
from search.sweep import SweepRow, sweep_beam, write_sweep_csv

__all__ = [
    "DecodeItem",
    "Hypothesis",
    "NBestEntry",
    "ScoreComponents",
    "SweepRow",
    "beam_search",
    "carry_lm_state",
    "coverage",
    "decode_corpus",
    "fusion_score",
    "greedy_search",
    "greedy_weights",
    "nbest_entries",
    "read_hypotheses",
    "score_components",
    "sweep_beam",
    "write_hypotheses",
    "write_nbest",
    "write_sweep_csv",
]
