"""Numerical laboratory for Möbius disjointness of low-complexity systems."""

__version__ = "0.1.0"
