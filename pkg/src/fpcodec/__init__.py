"""Fingerprint image compression toolkit.

Provides a mean-and-scale hyperprior codec with a real range coder, a 9/7
wavelet transform-coding baseline, fingerprint minutiae extraction and
matching, and rate-distortion / minutiae-impact reporting.
"""

__version__ = "0.1.0"
