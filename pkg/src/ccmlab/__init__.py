"""Spectral lab for the continuum Calogero-Moser equation on a periodic Hardy grid."""

__version__ = "0.1.0"
