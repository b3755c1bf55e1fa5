"""Transducer toolkit: HAT/RNNT models, CTC-style heads, blank-thresholded decoding."""

__version__ = "0.1.0"
