"""Occupancy estimation and policy-cover construction in finite low-rank MDPs.

Set ``LOWRANK_OCCUPANCY_NUMBA=0`` to run the pure-numpy kernels; the flag is read on every kernel call.
"""
from .errors import (
    DataInconsistency,
    EstimationError,
    InfeasibleClass,
    LevelOutOfRange,
    LowRankError,
    ObjectiveError,
    OptimizerDivergence,
    ShapeMismatch,
    SpannerError,
)
from .mdp import (
    LowRankMdp,
    MarkovPolicy,
    Occupancy,
    PseudoPolicy,
    RewardFunction,
    bellman_flow,
    clipped_occupancies,
    exact_occupancies,
    occupancy_matrix,
    plugin_return,
    policy_return,
    validate_mdp,
)
from .data import LevelBlock, TupleDataset
from .sampling import sample_level_dataset, sample_trajectories
from .estimators import (
    ClipThresholds,
    LinearDensityClass,
    WeightClass,
    WeightRatio,
    clip_action_policy,
    clip_state_density,
    extract_density,
    fit_weight,
    mle_density,
    mle_fit,
    regression_loss,
)
from .spanner import SpannerResult, approx_spanner, concentrability_coefficient, exact_spanner
from .linearize import L1Fit, l1_linearize
from .representation import FeatureCandidateSet, joint_feature_select, union_fit_weight, union_mle_density
from .forc import (
    ForcConfig,
    ForcOutput,
    Selection,
    clipped_target,
    forc_estimate,
    forcrl_estimate,
    pessimistic_policy_select,
    regression_decomposition_audit,
    theoretical_sample_sizes,
)
from .force import (
    ForceConfig,
    ForceResult,
    force_run,
    force_sample_sizes,
    forcrle_run,
    missingness_audit,
    online_policy_select,
)
from .objectives import (
    OccupancyObjective,
    l2_match_objective,
    neg_entropy_objective,
    plugin_objective_select,
    return_objective,
)

__version__ = "0.1.0"
