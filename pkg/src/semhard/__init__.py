"""Semantically-enhanced hard-negative training for visual-semantic embeddings."""

__version__ = "0.1.0"
