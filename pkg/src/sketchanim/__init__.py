"""Multi-object vector sketch animation engine."""

__version__ = "0.1.0"
