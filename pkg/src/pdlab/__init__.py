"""Finite-grid duality laboratory for conditional-moment transport DRO and robust programs."""

__version__ = "0.1.0"
