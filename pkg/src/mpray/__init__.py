"""Numerical toolkit for magnetic-potential (MP) systems on coordinate balls."""

__version__ = "0.1.0"
