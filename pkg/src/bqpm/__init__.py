"""Design and simulation of backward quasi-phase-matched polarization-entangled photon sources."""

__version__ = "0.1.0"
