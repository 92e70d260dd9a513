"""Occupation-time functionals of stationary Markov processes."""

__version__ = "0.1.0"
