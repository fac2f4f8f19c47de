"""Executable group-ring dynamics for principal algebraic actions of Z^d and H."""

__version__ = "0.1.0"
