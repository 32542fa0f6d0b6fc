"""Numerical laboratory for conservation laws of harmonic-map systems.

The package builds the pieces of the divergence-form rewriting of
-lap(u) = Omega . grad(u) on the periodic torus: spectral exterior calculus,
Lorentz norms, sphere-valued maps and their heat flow, the antisymmetric
connection, Coulomb gauge fixing, the contraction-mapping construction of a
conservation pair (A, B), and residual verification under grid refinement.
"""

__version__ = "0.1.0"
