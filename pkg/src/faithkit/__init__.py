"""Faithfulness evaluation toolkit for abstractive dialogue summarization."""

__version__ = "0.1.0"
