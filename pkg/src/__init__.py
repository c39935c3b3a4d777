"""ASEA - active node selection with external attention for skeleton interactions."""

__version__ = "0.1.0"
