"""Statevector simulation of quantum estimators for inverse participation ratios."""

__version__ = "0.1.0"
