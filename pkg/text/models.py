"""Data models for transcripts and subword units."""

from typing import Optional

from pydantic import BaseModel, Field, field_validator

BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"
SPECIAL_TOKENS = [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN]
WORD_BOUNDARY = "▁"


class Transcript(BaseModel):
    """One utterance's reference text."""

    utterance_id: str = Field(..., min_length=1, description="Unique utterance identifier")
    speaker_id: str = Field("", description="Speaker identifier")
    text: str = Field("", description="Whitespace-tokenized words")

    @property
    def words(self) -> list[str]:
        return self.text.split()


class TranscriptCorpus(BaseModel):
    """Ordered transcripts with unique utterance ids."""

    utterances: list[Transcript] = Field(default_factory=list)

    @field_validator("utterances")
    @classmethod
    def validate_unique_ids(cls, v: list[Transcript]) -> list[Transcript]:
        """Ensure utterance ids are unique."""
        seen: set[str] = set()
        for utt in v:
            if utt.utterance_id in seen:
                raise ValueError(f"duplicate utterance id {utt.utterance_id!r}")
            seen.add(utt.utterance_id)
        return v

    def __len__(self) -> int:
        return len(self.utterances)

    def texts(self) -> list[str]:
        return [utt.text for utt in self.utterances]

    def by_id(self) -> dict[str, Transcript]:
        return {utt.utterance_id: utt for utt in self.utterances}


class FilterSettings(BaseModel):
    """Transcript preparation switches."""

    drop_fragments: bool = Field(False, description="Remove word fragments (trailing hyphen)")
    drop_noise: bool = Field(False, description="Remove bracketed noise tokens")
    dedup_max: Optional[int] = Field(None, ge=1, description="Keep at most this many identical transcripts")


class BpeModel(BaseModel):
    """
    Ordered merges and the token inventory.

    `symbols[i]` is the token with id i: the three specials, then the sorted
    base symbols (characters and the word-boundary marker), then merged tokens
    in merge order.
    """

    merges: list[tuple[str, str]] = Field(default_factory=list, description="Merge rules in training order")
    symbols: list[str] = Field(..., description="Token inventory indexed by id")

    @field_validator("symbols")
    @classmethod
    def validate_symbols(cls, v: list[str]) -> list[str]:
        """Ensure the specials lead and tokens are unique."""
        if v[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValueError(f"symbols must start with {SPECIAL_TOKENS}")
        if len(set(v)) != len(v):
            raise ValueError("symbols must be unique")
        return v

    @property
    def vocab_size(self) -> int:
        return len(self.symbols)

    def token_ids(self) -> dict[str, int]:
        return {symbol: i for i, symbol in enumerate(self.symbols)}
