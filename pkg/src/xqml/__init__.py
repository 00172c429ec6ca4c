"""Hybrid quantum-classical classification on simulated noisy devices."""

__version__ = "0.1.0"
