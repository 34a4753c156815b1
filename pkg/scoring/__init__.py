"""Word error rate scoring."""

from scoring.models import ScoreReport, UtteranceScore
from scoring.report import format_summary, write_report
from scoring.wer import edit_distance, normalize_words, score_corpus, score_utterance, token_error_rate

__all__ = [
    "ScoreReport",
    "UtteranceScore",
    "edit_distance",
    "format_summary",
    "normalize_words",
    "score_corpus",
    "score_utterance",
    "token_error_rate",
    "write_report",
]
