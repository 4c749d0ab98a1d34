"""Hierarchical cube rotation with Davenport chained primitives."""
__version__ = "0.1.0"
