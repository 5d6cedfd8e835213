"""Synthetic-data cross-project software reliability forecasting."""

__version__ = "0.1.0"
