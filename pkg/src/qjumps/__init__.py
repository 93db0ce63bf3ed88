"""Quantum-jump unravelings of resonance fluorescence and their dressed-state interpretations."""

__version__ = "0.1.0"
