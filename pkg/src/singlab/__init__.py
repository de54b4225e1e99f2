"""Discrete laboratory for degenerate and singular elliptic operators."""

__version__ = "0.1.0"
