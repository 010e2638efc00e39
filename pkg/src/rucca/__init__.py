"""Recursive masked sequence-tagging semantic parser toolkit."""

__version__ = "0.1.0"
