"""Simulation and analysis of site-resolved atomic mechanical oscillators
in an optical superlattice read out through a cavity."""
__version__ = "0.1.0"
