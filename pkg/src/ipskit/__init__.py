"""Simulation and inequality-verification toolkit for interacting particle
systems with long-range couplings on finite windows of Z^d."""

__version__ = "0.1.0"
