"""Approximate Whittle index policies for partially observable restless bandits.

Core pieces: belief-state arm models (`model`), first-crossing-time solvers
with an exact analytic path for 3-state arms (`crossing`), the closed-form
approximate Whittle index (`index`), a certified value-iteration oracle for
the single-arm subsidy problem (`oracle`), multi-arm policies with a paired
Monte Carlo engine (`sim`), experiment configs and drivers (`config`,
`experiments`), and an HTTP service plus thin CLI (`service`, `cli`).
"""

__version__ = "0.1.0"

from .model import Arm, BanditInstance, belief_update_active, belief_update_passive, k_step_update, stationary_distribution
from .crossing import INFINITE, SpectrumClass, SpectrumForm, classify_spectrum, first_crossing, first_crossing_analytic_k3, first_crossing_scan
from .index import IndexResult, approximate_whittle_index, build_ingredients, indifference_residual, solve_threshold_values
from .oracle import Membership, OracleConfig, classical_index_bisect, membership_probe, passive_time, value_single_arm
from .sim import Policy, PolicyKind, optimal_dp, run_episode, run_monte_carlo, select_myopic, select_whittle

__all__ = [
    "Arm", "BanditInstance", "belief_update_active", "belief_update_passive",
    "k_step_update", "stationary_distribution",
    "INFINITE", "SpectrumClass", "SpectrumForm", "classify_spectrum",
    "first_crossing", "first_crossing_analytic_k3", "first_crossing_scan",
    "IndexResult", "approximate_whittle_index", "build_ingredients",
    "indifference_residual", "solve_threshold_values",
    "Membership", "OracleConfig", "classical_index_bisect", "membership_probe",
    "passive_time", "value_single_arm",
    "Policy", "PolicyKind", "optimal_dp", "run_episode", "run_monte_carlo",
    "select_myopic", "select_whittle",
]
