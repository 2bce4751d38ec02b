"""Batch sentence-embedding export to the EMB1 binary format."""

__version__ = "0.1.0"
