"""Average-cost HJB toolkit for one-dimensional controlled diffusions.

Grid solvers (upwind Markov-chain generators, policy iteration, discounted
and truncated problems), a compatibility test for candidate HJB pairs,
quadrature oracles for the bang-bang example and a Monte Carlo engine.
"""

from .discretize import BandedOperator, Grid1D, build_grid
from .model import ControlSet, DiffusionModel, builtin_example, constant_cost_model, ou_model
from .sde import PathStats, SimConfig
from .solvers import SolutionPair, run_pia
from .valuedet import InvariantDensity, Policy, ValueFunction
from .verify import CompatibilityReport, Verdict, check_compatible

__version__ = "0.1.0"

__all__ = [
    "BandedOperator", "CompatibilityReport", "ControlSet", "DiffusionModel", "Grid1D", "InvariantDensity",
    "PathStats", "Policy", "SimConfig", "SolutionPair", "ValueFunction", "Verdict", "build_grid",
    "builtin_example", "check_compatible", "constant_cost_model", "ou_model", "run_pia",
]
