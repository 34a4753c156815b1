"""Transcript TSV files and the BPE model text format."""

import logging
from pathlib import Path
from typing import Union

from text.models import BpeModel, Transcript, TranscriptCorpus

logger = logging.getLogger(__name__)

MERGES_HEADER = "#merges"
VOCAB_HEADER = "#vocab"


def read_transcripts(path: Union[str, Path]) -> TranscriptCorpus:
    """
    Read `utterance_id<TAB>speaker_id<TAB>text` lines (UTF-8).

    Raises:
        ValueError: On a malformed line or duplicate ids
    """
    utterances = []
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{number}: expected id, speaker and text separated by tabs")
            text = parts[2] if len(parts) == 3 else ""
            utterances.append(Transcript(utterance_id=parts[0], speaker_id=parts[1], text=text))
    return TranscriptCorpus(utterances=utterances)


def write_transcripts(path: Union[str, Path], corpus: TranscriptCorpus) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for utt in corpus.utterances:
            f.write(f"{utt.utterance_id}\t{utt.speaker_id}\t{utt.text}\n")
    return path


def save_bpe(path: Union[str, Path], model: BpeModel) -> Path:
    """One merge per line, then the vocabulary listing (id, token)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{MERGES_HEADER}\n")
        for first, second in model.merges:
            f.write(f"{first} {second}\n")
        f.write(f"{VOCAB_HEADER}\n")
        for i, symbol in enumerate(model.symbols):
            f.write(f"{i}\t{symbol}\n")
    logger.info(f"Saved BPE model ({model.vocab_size} units) to {path}")
    return path


def load_bpe(path: Union[str, Path]) -> BpeModel:
    """
    Read a model written by `save_bpe`.

    Raises:
        ValueError: If the file does not follow the format
    """
    merges: list[tuple[str, str]] = []
    symbols: list[str] = []
    section = None
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line in (MERGES_HEADER, VOCAB_HEADER):
                section = line
            elif section == MERGES_HEADER:
                first, _, second = line.partition(" ")
                if not first or not second:
                    raise ValueError(f"{path}: malformed merge line {line!r}")
                merges.append((first, second))
            elif section == VOCAB_HEADER:
                index, _, symbol = line.partition("\t")
                if int(index) != len(symbols):
                    raise ValueError(f"{path}: vocabulary ids must be consecutive")
                symbols.append(symbol)
            elif line:
                raise ValueError(f"{path}: content before {MERGES_HEADER}")
    return BpeModel(merges=merges, symbols=symbols)
