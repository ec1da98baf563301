"""Dirichlet problems for superpositions of fractional Laplacians on an interval."""

__version__ = "0.1.0"
