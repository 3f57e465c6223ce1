"""Terrain-program environment design with a skill-vector surrogate agent."""

__version__ = "0.1.0"
