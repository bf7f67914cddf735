"""Hybrid FEM / staggered finite-difference solver for 2D elastic waves."""

__version__ = "0.1.0"
