"""Data models for WER scoring."""

from pydantic import BaseModel, Field


class UtteranceScore(BaseModel):
    """Alignment counts of one utterance."""

    utterance_id: str
    n_ref: int = Field(..., ge=0, description="Reference words")
    substitutions: int = Field(0, ge=0)
    deletions: int = Field(0, ge=0)
    insertions: int = Field(0, ge=0)
    reference: str = ""
    hypothesis: str = ""

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        return self.errors / self.n_ref if self.n_ref else float(self.errors > 0)


class ScoreReport(BaseModel):
    """Per-utterance and corpus counts; WER = (S + D + I) / N_ref, which may exceed 1."""

    utterances: list[UtteranceScore] = Field(default_factory=list)
    missing: list[str] = Field(default_factory=list, description="References without a hypothesis (scored as empty)")

    @property
    def substitutions(self) -> int:
        return sum(u.substitutions for u in self.utterances)

    @property
    def deletions(self) -> int:
        return sum(u.deletions for u in self.utterances)

    @property
    def insertions(self) -> int:
        return sum(u.insertions for u in self.utterances)

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def n_ref(self) -> int:
        return sum(u.n_ref for u in self.utterances)

    @property
    def wer(self) -> float:
        return self.errors / self.n_ref if self.n_ref else 0.0
