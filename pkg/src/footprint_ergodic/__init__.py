"""Ergodic trajectory optimization with state-dependent sensor footprints."""

__version__ = "0.1.0"
