"""Betti coordinates, Neron-Tate heights and counting bounds for families of abelian varieties."""

__version__ = "0.1.0"
