"""Fluctuation theory and simulation for general-beta Dyson Brownian motion."""
__version__ = "0.1.0"
