"""Simulation lab for margin-based active learning of halfspaces under label noise."""

__version__ = "0.1.0"
