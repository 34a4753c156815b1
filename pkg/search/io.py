"""N-best and hypothesis text files."""

import logging
from pathlib import Path
from typing import Mapping, Sequence, Union

from config.models import FusionWeights
from network.model import EOS
from search.fusion import score_components
from search.models import Hypothesis, NBestEntry
from text.bpe import BpeEncoder

logger = logging.getLogger(__name__)


def nbest_entries(utterance_id: str, nbest: Sequence[Hypothesis], weights: FusionWeights, encoder: BpeEncoder) -> list[NBestEntry]:
    entries = []
    for rank, h in enumerate(nbest, 1):
        tokens = [t for t in h.tokens if t != EOS]
        entries.append(
            NBestEntry(
                utterance_id=utterance_id,
                rank=rank,
                components=score_components(h, weights),
                tokens=tokens,
                text=encoder.decode(tokens),
                finished=h.finished,
            )
        )
    return entries


def format_nbest_line(entry: NBestEntry) -> str:
    """`utterance_id rank total model lm length coverage text`, tab separated."""
    c = entry.components
    return "\t".join(
        [entry.utterance_id, str(entry.rank), f"{c.total:.6f}", f"{c.model:.6f}", f"{c.lm:.6f}", str(c.length), str(c.coverage), entry.text]
    )


def write_nbest(path: Union[str, Path], entries: Sequence[NBestEntry]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(format_nbest_line(entry) + "\n")
    return path


def write_hypotheses(path: Union[str, Path], best: Mapping[str, str]) -> Path:
    """One `utterance_id<TAB>text` line per utterance, the input of `score`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for utterance_id, text in best.items():
            f.write(f"{utterance_id}\t{text}\n")
    logger.info(f"Wrote {len(best)} hypotheses to {path}")
    return path


def read_hypotheses(path: Union[str, Path]) -> dict[str, str]:
    """
    Read a file written by `write_hypotheses`.

    Raises:
        ValueError: On a line without an utterance id or a duplicate id
    """
    hypotheses: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            utterance_id, _, text = line.partition("\t")
            if not utterance_id or utterance_id in hypotheses:
                raise ValueError(f"{path}:{number}: missing or duplicate utterance id")
            hypotheses[utterance_id] = text
    return hypotheses
