"""Closed-loop active-learning molecular generation on a synthetic oracle."""

__version__ = "0.1.0"
