"""Numerical geometry of surfaces in the homogeneous spaces E(k, tau)."""

from ektau.space import SpaceParams

__version__ = "0.1.0"

__all__ = ["SpaceParams", "__version__"]
