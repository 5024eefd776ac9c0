"""Steering the cubic Schrodinger equation on the torus with low-mode forcing."""
__version__ = "0.1.0"
