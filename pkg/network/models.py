"""Records describing network sizes."""

from pydantic import BaseModel, Field


class ParameterCount(BaseModel):
    """Closed-form parameter breakdown of an encoder-decoder."""

    encoder: int = Field(..., ge=0, description="Encoder blocks plus the encoder bottleneck")
    decoder: int = Field(..., ge=0, description="Embedding, decoder LSTMs, bottleneck, output and attention")
    total: int = Field(..., ge=0, description="encoder + decoder")

    def millions(self) -> dict[str, float]:
        return {"encoder": self.encoder / 1e6, "decoder": self.decoder / 1e6, "total": self.total / 1e6}


class PerplexityReport(BaseModel):
    """Word-level perplexity of an LM on a corpus."""

    nll: float = Field(..., description="Summed negative log-likelihood of scored tokens (nats)")
    n_tokens: int = Field(..., ge=0, description="Scored tokens, including one end-of-sentence per utterance")
    n_words: int = Field(..., ge=1, description="Reference words plus one end-of-sentence per utterance")
    n_streams: int = Field(..., ge=1, description="Independently scored streams")
    ppl: float = Field(..., description="exp(nll / n_words)")
