"""Tests for the attention encoder-decoder recognizer."""
