"""ssmr: spectral-submanifold reduced-order models for smooth dynamical systems.

Extracts low-dimensional polynomial models on attracting invariant manifolds
from trajectories of high-dimensional systems (continuous-time recurrent
networks in particular) and analyzes the reduced dynamics: fixed points,
basins, limit cycles, heteroclinic loops, bifurcations, noise-perturbed
anchor trajectories, and FTLE basin boundaries.
"""

__version__ = "0.1.0"

from .errors import SsmrError  # noqa: F401
