"""Weak-label curation and fixed-length executor pool simulation for voice-query traffic."""

__version__ = "0.1.0"
