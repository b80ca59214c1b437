"""Pseudo-spectral simulator and verification suite for fractional micropolar equations."""

__version__ = "0.1.0"
