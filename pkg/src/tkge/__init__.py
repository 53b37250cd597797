"""Temporal knowledge-graph completion with balanced time buckets."""

__version__ = "0.1.0"
