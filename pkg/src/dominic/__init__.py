"""Diverse skill discovery under multiple near-optimal value constraints."""

__version__ = "0.1.0"
