"""Numerics for 3/2-spinor Seiberg-Witten theory: algebra, moduli charts, lattice operators and a flow solver."""

__version__ = "0.1.0"
