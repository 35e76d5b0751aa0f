"""Combinatorial pure exploration for causal bandits.

Simulate binary causal models under interventions, estimate do-effects from
passive observations, and identify the best intervention with fixed-confidence
or fixed-budget algorithms.
"""

from __future__ import annotations

from .algorithms import (
    ALGORITHMS,
    AlgoConfig,
    Environment,
    TrialRecord,
    causal_successive_reject,
    ccpe_bglm,
    ccpe_general,
    lil_ucb_heuristic,
    lucb,
)
from .complexity import (
    HardnessProfile,
    fixed_budget_constants,
    gap_threshold,
    h_r,
    lower_bound_value,
    observation_threshold,
    predict_sample_complexity,
)
from .estimation import (
    ActionCounters,
    IntervalEstimate,
    MleAccumulator,
    ObservationTable,
    merge_intervals,
    mle_fit,
    plugin_estimate,
)
from .graph import (
    NULL_ACTION,
    Action,
    AdmissibleSequence,
    CausalGraph,
    construct_admissible_sequence_no_hidden,
    d_separated,
    make_action,
    verify_admissible_sequence,
)
from .harness import ExperimentConfig, grid_search, predict, replay, run_experiment
from .instances import Instance, generate_instance
from .scm import BglmScm, TabularScm, exact_joint, exact_mu, gaps, q_bglm, q_general, sample

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "NULL_ACTION",
    "Action",
    "ActionCounters",
    "AdmissibleSequence",
    "AlgoConfig",
    "BglmScm",
    "CausalGraph",
    "Environment",
    "ExperimentConfig",
    "HardnessProfile",
    "Instance",
    "IntervalEstimate",
    "MleAccumulator",
    "ObservationTable",
    "TabularScm",
    "TrialRecord",
    "causal_successive_reject",
    "ccpe_bglm",
    "ccpe_general",
    "construct_admissible_sequence_no_hidden",
    "d_separated",
    "exact_joint",
    "exact_mu",
    "fixed_budget_constants",
    "gap_threshold",
    "gaps",
    "generate_instance",
    "grid_search",
    "h_r",
    "lil_ucb_heuristic",
    "lower_bound_value",
    "lucb",
    "make_action",
    "merge_intervals",
    "mle_fit",
    "observation_threshold",
    "plugin_estimate",
    "predict",
    "predict_sample_complexity",
    "q_bglm",
    "q_general",
    "replay",
    "run_experiment",
    "sample",
    "verify_admissible_sequence",
]
