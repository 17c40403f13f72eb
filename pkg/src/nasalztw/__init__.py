"""Vowel nasalization analysis with zero-time-windowed HNGD spectra."""
__version__ = "0.1.0"
