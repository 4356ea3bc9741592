"""Optimal transmit power allocation from an energy-harvesting battery over
an i.i.d. fading channel, posed as a discounted Markov decision process."""

from .model import (
    InvalidActionError,
    InvalidSpecError,
    Pmf,
    ProblemSpec,
    RewardPropertyReport,
    State,
    check_reward_properties,
    log_reward,
    next_energy,
    reward,
    transition_prob,
)
from .solver import (
    InstanceTooLargeError,
    InvalidPolicyError,
    SolveDiagnostics,
    Solution,
    action_values,
    bellman_backup,
    brute_force_optimal,
    evaluate_policy,
    value_iteration,
)
from .structure import (
    StructureReport,
    check_concave_value,
    check_monotone_policy,
    check_monotone_value,
    check_submodularity,
    randomized_structure_sweep,
    verify_solution,
)
from .sim import SimReport, TraceConfig, baseline_policy, simulate_policy
from .config import build_named_pmf

__version__ = "0.1.0"
