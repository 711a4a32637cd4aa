"""Stark-Wannier gradient-field sensing: lattice dynamics, Fisher information and Bayesian estimation."""

__version__ = "0.1.0"
