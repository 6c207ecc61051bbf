"""Compile, introspect and audit natural-language access-control matrices."""

__version__ = "0.1.0"
