"""HTTP service wrapping the animation engine."""

from .app import create_app

__all__ = ["create_app"]
