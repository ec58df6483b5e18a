"""Coulomb gas free energies and fluctuations for radial potentials."""
