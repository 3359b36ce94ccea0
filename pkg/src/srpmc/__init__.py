"""Prescribed mean curvature and characteristic curves for intrinsic graphs
in three-dimensional contact sub-Riemannian manifolds."""

from .expr import ScalarField, parse, differentiate, evaluate
from .geometry import ContactMetric, heisenberg

__version__ = "0.1.0"
