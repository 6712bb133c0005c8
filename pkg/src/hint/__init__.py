"""Streaming multi-human motion generation with hierarchical interaction conditioning."""

__version__ = "0.1.0"
