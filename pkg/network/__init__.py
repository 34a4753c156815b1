"""Encoder-decoder network, attention and the external LSTM language model."""

from network.lm import LstmLm, Segment, perplexity
from network.model import BOS, EOS, UNK, Seq2Seq, count_parameters

__all__ = ["BOS", "EOS", "LstmLm", "Segment", "Seq2Seq", "UNK", "count_parameters", "perplexity"]
