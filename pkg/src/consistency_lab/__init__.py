"""Numerical laboratory for spectral consistency of graph discretizations.

Builds proximity graphs on sampled manifolds, compares their Laplacian
spectra and eigenvector frames against closed-form references, transports
signals between the sample and the manifold, and trains small spectral
networks end to end across a resolution ladder.
"""

__version__ = "0.1.0"
