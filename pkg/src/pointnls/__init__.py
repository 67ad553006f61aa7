"""Charge-equation solver for the 2D Schrodinger evolution with a
point-concentrated nonlinearity."""

__version__ = "0.1.0"
