"""Exact and high precision checks for smooth imploding profiles of the relativistic Euler equations."""

__version__ = "0.1.0"
