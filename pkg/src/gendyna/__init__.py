"""Dyna-style reinforcement learning with deep belief network world models."""

__version__ = "0.1.0"
