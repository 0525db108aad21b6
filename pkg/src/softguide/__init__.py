"""Spectra of 2D Schroedinger operators with ditch-shaped potentials along bent curves."""

__version__ = "0.1.0"
