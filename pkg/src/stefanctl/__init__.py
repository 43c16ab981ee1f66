"""Hierarchical (leader / two followers) control of the one-phase Stefan problem."""

__version__ = "0.1.0"
