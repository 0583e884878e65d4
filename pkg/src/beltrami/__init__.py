"""Doubly periodic Beltrami flows under a free surface: potentials, functionals, variations."""

__version__ = "0.1.0"
