"""Desk-scale quantitative Khintchine-Groshev experiments on affine subspaces."""

__version__ = "0.1.0"
