"""Decoherence of two-mode photon-number entangled states in a thermal reservoir."""

__version__ = "0.1.0"
