"""Aspect-based document similarity: citation-derived pair datasets and classifiers."""

__version__ = "0.1.0"
