"""Pairwise-likelihood inference for space-time max-stable processes."""

__version__ = "0.1.0"
