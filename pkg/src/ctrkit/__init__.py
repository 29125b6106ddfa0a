"""Concentric-tube robot kinematics toolkit.

Cosserat-rod boundary value problem, single-pass propagation of first-
and second-order tip derivatives, manipulability indices with analytic
gradients, and redundancy-resolving controllers with simulation
scenarios.

Twist convention: 6-vectors are stacked [linear; angular].
"""

from .errors import (
    ConvergenceError,
    CtrError,
    IllPosedModelError,
    IntegrationError,
    InvalidConfigurationError,
    SingularClosureError,
    SingularConfigurationError,
)
from .liegroup import TOL
from .model import Backbone, BvpSolution, IntegrateOptions, integrate_ivp, solve_bvp
from .derivprop import KinematicSolution, kinematics
from .tubes import TubeParams, TubeSet

__all__ = [
    "Backbone",
    "BvpSolution",
    "ConvergenceError",
    "CtrError",
    "IllPosedModelError",
    "IntegrateOptions",
    "IntegrationError",
    "InvalidConfigurationError",
    "KinematicSolution",
    "SingularClosureError",
    "SingularConfigurationError",
    "TOL",
    "TubeParams",
    "TubeSet",
    "integrate_ivp",
    "kinematics",
    "solve_bvp",
]

__version__ = "0.1.0"
