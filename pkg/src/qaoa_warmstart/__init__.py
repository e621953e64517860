"""Warm-start parameter accelerator for QAOA on weighted Ising graphs."""

__version__ = "0.1.0"
