"""Voter-model occupation-time toolkit: simulation, duality, and limit laws."""

__version__ = "0.1.0"
