"""Truncated KAM normal forms for the quintic NLS with a convolution potential."""

__version__ = "0.1.0"
