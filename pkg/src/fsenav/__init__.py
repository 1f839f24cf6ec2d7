"""Frontier semantic exploration for object-goal navigation on procedural gridworlds."""

__version__ = "0.1.0"
