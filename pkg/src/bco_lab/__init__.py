"""Bayesian bandit convex optimisation on [0, 1]: algorithms, diagnostics and checks."""

from .bandit_bayes import AlgoConfig, run_episode, theorem_bound
from .convexfn import DiscreteMeasure, Grid, GridFunction
from .prior import FinitePrior, Posterior, build_prior

__all__ = [
    "AlgoConfig",
    "DiscreteMeasure",
    "FinitePrior",
    "Grid",
    "GridFunction",
    "Posterior",
    "build_prior",
    "run_episode",
    "theorem_bound",
]
__version__ = "0.1.0"
