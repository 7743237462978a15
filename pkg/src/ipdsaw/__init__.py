"""Simulation and verification toolkit for the critical IPDSAW polymer."""

__version__ = "0.1.0"
