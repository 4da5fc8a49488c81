"""Classical simulation suite for grid-state continuous-variable circuits."""

from . import core, exact, lattice, magic, tableau, theta, zgw

__all__ = ["core", "exact", "lattice", "magic", "tableau", "theta", "zgw"]
__version__ = "0.1.0"
