"""
End-to-end evaluation runs.

These tests generate a synthetic corpus, train real models and decode with them.
They are marked as slow and skipped by default.
"""
