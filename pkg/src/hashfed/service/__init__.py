"""HTTP service wrapping the experiment harness."""

from .app import create_app

__all__ = ["create_app"]
