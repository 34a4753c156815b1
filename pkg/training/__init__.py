"""Losses, optimizer, schedule and training loops."""
