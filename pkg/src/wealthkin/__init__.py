"""wealthkin: multiscale simulation of non-conservative wealth dynamics.

Three mutually validating descriptions of the same market of risk-averse
agents: a seeded N-agent SDE simulation, a kinetic Fokker-Planck solver on
a configuration-wealth grid, and a closed hydrodynamic system for the agent
density and local mean wealth, tied together by the analytic inverse-Gamma
equilibrium and a generalized collision invariant.
"""

from .model import (
    ModelParams,
    MomentPair,
    CostFunction,
    VelocityField,
    strategy_a,
    strategy_b,
    best_reply_drift,
    cost_eval,
    velocity_eval,
)
from .grids import WealthGrid, XGrid
from .equilibrium import (
    InverseGamma,
    DiscreteGibbs,
    gibbs_closed_form,
    gibbs_for_coefficients,
    inverse_gamma_moment,
    gibbs_numeric,
    moment_recursion,
    constitutive_residual,
    manifold_upsilon2,
    fixed_point_solve,
)
from .gci import (
    GciFunction,
    LagrangePair,
    gci_eval,
    lagrange_multipliers,
    adjoint_residual,
    annihilation_test,
)
from .kinetic import KineticState, MomentField
from .particles import AgentEnsemble, ParticleConfig
from .macro import MacroState, FluxCoefficients
from .harness import Scenario, parse_scenario, run_scenario, compare, tail_fit

__version__ = "0.1.0"
