"""Staggered discontinuous Galerkin solver for coupled Stokes / Darcy-Forchheimer flow."""

__version__ = "0.1.0"
