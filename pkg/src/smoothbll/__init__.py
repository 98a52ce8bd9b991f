"""Smoothed Brascamp-Lieb-like constants and common-randomness converse bounds."""

__version__ = "0.1.0"
