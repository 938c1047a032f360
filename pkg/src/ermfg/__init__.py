"""Entropy-regularized mean-field games on finite state and action spaces."""

from .environments import build_graph_game, default_resource_allocation
from .equilibrium import (
    EquilibriumResult,
    LipschitzReport,
    estimate_contraction,
    exploitability,
    gamma_kl,
    lipschitz_report,
    solve_mfe,
    solve_unregularized,
)
from .finite_population import convergence_sweep, deviation_gain, deviation_sweep, simulate_population
from .model import (
    CoupledReward,
    DimensionError,
    DistributionFlow,
    GameSpec,
    ParameterError,
    Policy,
    Space,
    Theta,
    TransitionKernel,
    d_flow,
    d_policy,
    d_tv,
    validate,
)
from .propagation import induced_kernel, induced_reward, propagate
from .soft_bellman import evaluate_kl, evaluate_plain, hard_opt, soft_policy, soft_q

__version__ = "0.1.0"
