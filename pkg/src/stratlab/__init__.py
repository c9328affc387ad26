"""Numerical harmonic analysis on stratified groups (Heisenberg H^1 and R^n)."""

__version__ = "0.1.0"
