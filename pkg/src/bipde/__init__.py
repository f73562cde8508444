"""Inverse PDE parameter recovery with differentiable solver layers."""

__version__ = "0.1.0"
