"""Adaptive multiresolution lattice Boltzmann solver and stencil analyzer."""

__version__ = "0.1.0"
