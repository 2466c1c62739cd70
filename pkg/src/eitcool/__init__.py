"""Simulation of single- and double-bright EIT cooling of a trapped 40Ca+ ion."""

__version__ = "0.1.0"
