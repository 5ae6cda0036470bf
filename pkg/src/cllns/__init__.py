"""Contrastive-learning-guided large neighborhood search for binary ILPs."""

__version__ = "0.1.0"
