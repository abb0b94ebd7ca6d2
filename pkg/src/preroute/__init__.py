"""Pre-routing timing prediction toolkit."""

__version__ = "0.1.0"
