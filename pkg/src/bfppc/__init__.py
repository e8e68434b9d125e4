"""Barrier-function-free prescribed performance control toolkit."""

__version__ = "0.1.0"
