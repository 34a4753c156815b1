"""
Character-level byte-pair encoding.

Each word is its characters followed by the word-boundary marker `▁`, so
decoding is unambiguous. Training greedily merges the most frequent adjacent
pair (ties: lexicographically smallest pair) until the target vocabulary size
is reached or no pair is frequent enough.
"""

import logging
from collections import Counter
from typing import Iterable, Sequence

from text.models import BOS_TOKEN, EOS_TOKEN, SPECIAL_TOKENS, UNK_TOKEN, WORD_BOUNDARY, BpeModel

logger = logging.getLogger(__name__)

BOS_ID, EOS_ID, UNK_ID = 0, 1, 2

Word = tuple[str, ...]


def word_symbols(word: str) -> Word:
    return (*word, WORD_BOUNDARY)


def merge_pair(symbols: Word, pair: tuple[str, str]) -> Word:
    """Merge every non-overlapping occurrence of `pair`, left to right."""
    first, second = pair
    merged: list[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == first and symbols[i + 1] == second:
            merged.append(first + second)
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return tuple(merged)


def pair_counts(words: Counter[Word]) -> Counter[tuple[str, str]]:
    counts: Counter[tuple[str, str]] = Counter()
    for symbols, freq in words.items():
        for pair in zip(symbols, symbols[1:]):
            counts[pair] += freq
    return counts


def train_bpe(texts: Iterable[str], target_vocab_size: int, min_frequency: int = 2) -> BpeModel:
    """
    Learn merges until the vocabulary (specials + base symbols + merges)
    reaches `target_vocab_size`.

    Raises:
        ValueError: On an empty corpus or a target below the base inventory
    """
    words: Counter[Word] = Counter()
    for text in texts:
        for word in text.split():
            words[word_symbols(word)] += 1
    if not words:
        raise ValueError("Cannot train BPE on an empty corpus")

    base = sorted({symbol for symbols in words for symbol in symbols})
    symbols = [*SPECIAL_TOKENS, *base]
    if target_vocab_size < len(symbols):
        raise ValueError(f"Target vocabulary {target_vocab_size} is below the {len(symbols)} base symbols and specials")

    merges: list[tuple[str, str]] = []
    known = set(symbols)
    while len(symbols) < target_vocab_size:
        counts = pair_counts(words)
        if not counts:
            break
        best = max(counts.values())
        if best < min_frequency:
            break
        pair = min(p for p, c in counts.items() if c == best)
        merges.append(pair)
        token = pair[0] + pair[1]
        if token not in known:
            known.add(token)
            symbols.append(token)
        merged: Counter[Word] = Counter()
        for word, freq in words.items():
            merged[merge_pair(word, pair)] += freq
        words = merged

    if len(symbols) < target_vocab_size:
        logger.warning(f"BPE stopped at {len(symbols)} of {target_vocab_size} units: no pair occurs {min_frequency}+ times")
    logger.info(f"Trained BPE with {len(merges)} merges, {len(symbols)} units")
    return BpeModel(merges=merges, symbols=symbols)


class BpeEncoder:
    """Applies a BpeModel; per-word segmentations are cached."""

    def __init__(self, model: BpeModel) -> None:
        self.model = model
        self.ids = model.token_ids()
        self._cache: dict[str, list[int]] = {}

    def encode_word(self, word: str) -> list[int]:
        if word not in self._cache:
            symbols: Word = tuple(s if s in self.ids else UNK_TOKEN for s in word_symbols(word))
            for pair in self.model.merges:
                if len(symbols) == 1:
                    break
                symbols = merge_pair(symbols, pair)
            self._cache[word] = [self.ids[s] for s in symbols]
        return self._cache[word]

    def encode(self, text: str, frame: bool = False) -> list[int]:
        """Token ids of `text`; with `frame`, wrapped in BOS … EOS."""
        ids = [token for word in text.split() for token in self.encode_word(word)]
        return [BOS_ID, *ids, EOS_ID] if frame else ids

    def decode(self, ids: Sequence[int]) -> str:
        """Text of token ids; BOS/EOS are skipped and unknown characters appear as `<unk>`."""
        pieces = []
        for token in ids:
            symbol = self.model.symbols[int(token)]
            if symbol in (BOS_TOKEN, EOS_TOKEN):
                continue
            pieces.append(symbol)
        return " ".join("".join(pieces).split(WORD_BOUNDARY)).strip()


def encode(model: BpeModel, text: str, frame: bool = False) -> list[int]:
    return BpeEncoder(model).encode(text, frame)


def decode(model: BpeModel, ids: Sequence[int]) -> str:
    return BpeEncoder(model).decode(ids)
