"""Infer hidden velocity and pressure fields from passive-scalar observations."""

__version__ = "0.1.0"
