"""Periods of the Hulek-Verrill elliptic fibration and the AESZ 34 threefold."""

__version__ = "0.1.0"
