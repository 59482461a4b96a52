"""Wasserstein distributionally robust optimization for affine decision rules."""

__version__ = "0.1.0"
