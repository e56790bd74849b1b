"""Spectral analysis of truncated fiber QED Hamiltonians."""

__version__ = "0.1.0"
