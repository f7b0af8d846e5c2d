"""Numerical engine for elliptic lower-dimensional invariant tori.

Solves the homological equations of a Newton-type (KAM) iteration for
Hamiltonians on T^d x R^d x C^n x C^n, certifies Green's functions of
truncated Toeplitz-plus-diagonal lattice operators directly and through
multiscale coupling, performs parameter exclusion, and verifies persistence
and linear stability of the resulting torus at desk scale.
"""

__version__ = "0.1.0"
