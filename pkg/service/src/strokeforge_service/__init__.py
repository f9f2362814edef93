"""Perceptual scoring sidecar for strokeforge."""

__version__ = "0.1.0"
