"""Implicit maximum likelihood estimation for implicit generative models."""

__version__ = "0.1.0"
