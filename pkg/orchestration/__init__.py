"""Recognizer pipeline - one workflow per CLI command."""
