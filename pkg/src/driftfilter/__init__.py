"""Content-based spam filtering with drift-triggered incremental retraining."""

__version__ = "0.1.0"
