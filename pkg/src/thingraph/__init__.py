"""Thin planar networks and their energy-dependent limiting graph operators."""

__version__ = "0.1.0"
