"""Numerical checks of hypocoercive decay for the kinetic Fokker-Planck equation."""

__version__ = "0.1.0"
