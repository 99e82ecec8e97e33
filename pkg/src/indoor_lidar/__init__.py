"""Synthetic indoor LiDAR dataset generation and detection benchmarking."""

__version__ = "0.1.0"
