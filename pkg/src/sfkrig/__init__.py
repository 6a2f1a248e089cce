"""Sparse ordinary kriging for functional data."""

__version__ = "0.1.0"
