"""Offline figure rendering for simulation run artifacts."""

__version__ = "0.1.0"
