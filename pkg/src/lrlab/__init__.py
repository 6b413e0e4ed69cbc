"""Numerical laboratory for locality bounds, quasi-local inverses of the
Liouvillian, spectral flow, and perturbation locality in long-range lattice
fermion systems, with a spin-system comparison track."""

__version__ = "0.1.0"
