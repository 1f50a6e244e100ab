"""Synthetic multi-modal training experiments and a feature-learning simulator."""

__version__ = "0.1.0"
