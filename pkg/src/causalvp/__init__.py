"""Numerical toolkit for causal variational principles on discrete measures.

Submodules: ``geometry``, ``lagrangians``, ``measures``, ``eulerlagrange``,
``linfield``, ``symplectic``, ``minimality`` and the batch front-end ``cli``.
"""
from .lagrangians import (
    CfsLagrangian,
    CfsParams,
    LatticeLagrangian,
    LatticeParams,
    ParameterError,
    SphereLagrangian,
    SphereParams,
    semi_derivative,
)
from .measures import DiscreteMeasure, LatticeWindow, SignedMeasure, action, action_difference

__version__ = "0.1.0"

__all__ = [
    "CfsLagrangian",
    "CfsParams",
    "DiscreteMeasure",
    "LatticeLagrangian",
    "LatticeParams",
    "LatticeWindow",
    "ParameterError",
    "SignedMeasure",
    "SphereLagrangian",
    "SphereParams",
    "action",
    "action_difference",
    "semi_derivative",
]
