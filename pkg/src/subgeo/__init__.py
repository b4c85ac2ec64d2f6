"""Weak Poincaré inequality toolkit for Markov chain convergence bounds."""

__version__ = "0.1.0"
