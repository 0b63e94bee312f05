"""Computational metric projective geometry.

Charts, metrics and affine connections with exact higher-order derivatives,
the projectively invariant operators built from them, a collocation solver
for the metrisability equation, and geodesic-flow first integrals verified by
direct integration.
"""

__version__ = "0.1.0"
