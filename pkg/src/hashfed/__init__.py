"""Vertical federated learning lab over binary hash codes."""

__version__ = "0.1.0"
