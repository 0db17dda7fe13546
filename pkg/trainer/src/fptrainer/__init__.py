"""Desk-scale rate-distortion trainer exporting fpcodec weight files."""

__version__ = "0.1.0"
