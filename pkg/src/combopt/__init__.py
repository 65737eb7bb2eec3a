"""Optimization and certification of superchannels that turn k uses of an
unknown unitary into its conjugate, transpose, or inverse."""

__version__ = "0.1.0"
