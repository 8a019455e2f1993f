"""Bayes-error bounds for vanilla, deterministic-robust and probabilistic-robust accuracy."""

__version__ = "0.1.0"
