"""Hyperfinite random walks, Feynman-Kac kernel estimators and their oracles."""

__version__ = "0.1.0"
