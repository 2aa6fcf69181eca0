"""Multimodal soil-moisture estimation: ingestion, matching, features, forest and experiments."""

__version__ = "0.1.0"
