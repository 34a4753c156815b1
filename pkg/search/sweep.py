"""WER as a function of beam width, with and without the LM and its carried state."""

import csv
import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from pydantic import BaseModel, Field

from config.models import FusionWeights
from network.lm import LstmLm
from network.model import EOS, Seq2Seq
from scoring.wer import score_corpus
from search.beam import DecodeItem, decode_corpus
from search.models import Hypothesis
from text.bpe import BpeEncoder

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["beam", "wer_nolm", "wer_lm", "wer_lm_xutt"]


class SweepRow(BaseModel):
    """One beam width; LM columns are empty without an LM."""

    beam: int = Field(..., ge=1)
    wer_nolm: float
    wer_lm: Optional[float] = None
    wer_lm_xutt: Optional[float] = None


def best_texts(decoded: Mapping[str, list[Hypothesis]], encoder: BpeEncoder) -> dict[str, str]:
    return {u: encoder.decode([t for t in nbest[0].tokens if t != EOS]) for u, nbest in decoded.items()}


def sweep_beam(
    model: Seq2Seq,
    items: Sequence[DecodeItem],
    references: Mapping[str, str],
    encoder: BpeEncoder,
    beams: Sequence[int],
    weights: FusionWeights,
    lm: Optional[LstmLm] = None,
    max_group_seconds: float = 40.0,
    workers: int = 1,
) -> list[SweepRow]:
    """
    Decode the set once per beam width and configuration and score it.

    Raises:
        ValueError: If a beam width is below 1
    """
    if not beams or min(beams) < 1:
        raise ValueError(f"Beam widths must be ≥ 1, got {list(beams)}")

    def wer(w: FusionWeights, with_lm: Optional[LstmLm], cross: bool) -> float:
        decoded = decode_corpus(model, items, w, with_lm, cross, max_group_seconds, workers)
        return score_corpus(references, best_texts(decoded, encoder), workers).wer

    rows = []
    for beam in beams:
        w = weights.model_copy(update={"beam_width": beam, "nbest": 1})
        row = SweepRow(beam=beam, wer_nolm=wer(w.model_copy(update={"lm_weight": 0.0}), None, False))
        if lm is not None:
            row.wer_lm = wer(w, lm, False)
            row.wer_lm_xutt = wer(w, lm, True)
        logger.info(f"Beam {beam}: WER {row.wer_nolm:.2%} without LM")
        rows.append(row)
    return rows


def write_sweep_csv(path: Union[str, Path], rows: Sequence[SweepRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([row.beam, *("" if v is None else f"{v:.6f}" for v in (row.wer_nolm, row.wer_lm, row.wer_lm_xutt))])
    return path
