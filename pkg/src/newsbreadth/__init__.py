"""Dissemination-aware prompt and dataset pipeline for weekly stock movement prediction."""

__version__ = "0.1.0"
