"""Linear-response currents of disordered lattice fermions."""

__version__ = "0.1.0"
