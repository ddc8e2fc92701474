"""Equivariant geometric image networks on the d-torus."""

__version__ = "0.1.0"
