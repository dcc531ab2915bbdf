"""Simulation and inverse pipeline for a heatable on-chip attenuator noise source."""

__version__ = "0.1.0"
