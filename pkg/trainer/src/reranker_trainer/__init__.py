"""Trainer for a cross-encoder style pairwise scorer over contrastive groups."""

__version__ = "0.1.0"
