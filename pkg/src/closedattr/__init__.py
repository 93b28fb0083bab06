"""Numerical checks for closed, non-compact attractors."""

__version__ = "0.1.0"
