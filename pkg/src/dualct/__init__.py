"""Sparse-view cone-beam CT reconstruction with dual frequency/spatial projection encoders."""

__version__ = "0.1.0"
