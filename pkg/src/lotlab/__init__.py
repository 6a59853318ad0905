"""Linear optimal transport embeddings of discrete measures."""

__version__ = "0.1.0"
