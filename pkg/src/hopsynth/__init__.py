"""Corpus-to-dataset engine for synthesizing and evaluating multi-hop QA pairs."""

__version__ = "0.1.0"
