"""Transcript preparation and subword units."""

from text.bpe import BOS_ID, EOS_ID, UNK_ID, BpeEncoder, decode, encode, train_bpe
from text.filters import PRESETS, apply_preset, filter_preset, filter_transcripts
from text.io import load_bpe, read_transcripts, save_bpe, write_transcripts
from text.models import BpeModel, FilterSettings, Transcript, TranscriptCorpus

__all__ = [
    "BOS_ID",
    "EOS_ID",
    "PRESETS",
    "UNK_ID",
    "BpeEncoder",
    "BpeModel",
    "FilterSettings",
    "Transcript",
    "TranscriptCorpus",
    "apply_preset",
    "decode",
    "encode",
    "filter_preset",
    "filter_transcripts",
    "load_bpe",
    "read_transcripts",
    "save_bpe",
    "train_bpe",
    "write_transcripts",
]
