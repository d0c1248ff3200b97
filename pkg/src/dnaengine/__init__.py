"""Simulation of a microfluidic DNA-nicking neural engine."""

__version__ = "0.1.0"
