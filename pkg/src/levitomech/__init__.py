"""Quantum theory toolkit for levitated dielectric nanospheres in optical cavities."""

__version__ = "0.1.0"
