"""Data-driven state-feedback synthesis from noisy input/state data."""

__version__ = "0.1.0"
