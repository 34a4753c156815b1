"""Text summary and per-utterance CSV of a ScoreReport."""

import csv
import logging
from pathlib import Path
from typing import Union

from scoring.models import ScoreReport

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["utterance_id", "n_ref", "substitutions", "deletions", "insertions", "errors", "wer", "reference", "hypothesis"]


def format_summary(report: ScoreReport, title: str = "SCORE") -> str:
    lines = [
        "=" * 80,
        title,
        "=" * 80,
        f"Utterances:    {len(report.utterances)}",
        f"Ref words:     {report.n_ref}",
        f"Substitutions: {report.substitutions}",
        f"Deletions:     {report.deletions}",
        f"Insertions:    {report.insertions}",
        f"Errors:        {report.errors}",
        f"WER:           {100 * report.wer:.2f}%",
    ]
    if report.missing:
        lines.append(f"Missing hypotheses: {len(report.missing)}")
    return "\n".join(lines) + "\n"


def write_report(report: ScoreReport, directory: Union[str, Path], name: str = "score") -> tuple[Path, Path]:
    """
    Write `<name>.txt` (summary) and `<name>.csv` (one row per utterance).

    Returns:
        (summary path, CSV path)
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    summary_path = directory / f"{name}.txt"
    summary_path.write_text(format_summary(report), encoding="utf-8")
    csv_path = directory / f"{name}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for u in report.utterances:
            writer.writerow(
                [u.utterance_id, u.n_ref, u.substitutions, u.deletions, u.insertions, u.errors, f"{u.wer:.6f}", u.reference, u.hypothesis]
            )
    logger.info(f"Wrote score report to {summary_path} and {csv_path}")
    return summary_path, csv_path
