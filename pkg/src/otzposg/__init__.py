"""Exact finite-horizon Stackelberg solver for turn-based one-sided
zero-sum partially observable stochastic games with public actions.

The leader commits to a publicly known mixed policy over its belief; the
state-informed follower best-responds.  Stage games are solved exactly by
enumerating the vertices of a small linear program, multi-stage games by
value iteration over a polyhedral partition of the belief simplex, and a
seeded simulator cross-checks solved values empirically.
"""

from .belief import (
    BeliefUpdateResult,
    observation_probabilities,
    successor_matrix,
    update_belief,
)
from .model import (
    GameModel,
    JointAction,
    ModelError,
    Violation,
    build_model,
    load_model,
    load_model_file,
    model_hash,
    serialize_model,
    validate_belief,
    validate_model,
)
from .partition import (
    CoverageGapError,
    Partition,
    Region,
    backpropagate_region,
    branch_is_vacuous,
    is_active,
    locate,
    reduce_rows,
    refine,
    region_interior_point,
    simplex_grid,
    whole_simplex,
)
from .rewards import ShiftRecord, shift_rewards, unshift_value
from .simulate import EpisodeTrace, ValueEstimate, estimate_value, rollout, write_traces
from .stage_lp import (
    ExtremePoint,
    LPInstance,
    SolverInternalError,
    StagePayoffs,
    StageSolution,
    build_lp,
    enumerate_vertices,
    follower_best_response,
    pick_min_vertex,
    solve_stage,
    vertex_count_bound,
)
from .value_iteration import (
    RegionCapExceeded,
    SolutionBundle,
    StageValueFunction,
    backup,
    bundle_from_json,
    bundle_to_json,
    compute_phi,
    evaluate_policy_exact,
    sacrifice_policy,
    solve_game,
    terminal_value,
)

__version__ = "0.1.0"

__all__ = [
    "BeliefUpdateResult",
    "CoverageGapError",
    "EpisodeTrace",
    "ExtremePoint",
    "GameModel",
    "JointAction",
    "LPInstance",
    "ModelError",
    "Partition",
    "Region",
    "RegionCapExceeded",
    "ShiftRecord",
    "SolutionBundle",
    "SolverInternalError",
    "StagePayoffs",
    "StageSolution",
    "StageValueFunction",
    "ValueEstimate",
    "Violation",
    "backpropagate_region",
    "backup",
    "branch_is_vacuous",
    "build_lp",
    "build_model",
    "bundle_from_json",
    "bundle_to_json",
    "compute_phi",
    "enumerate_vertices",
    "estimate_value",
    "evaluate_policy_exact",
    "follower_best_response",
    "is_active",
    "load_model",
    "load_model_file",
    "locate",
    "model_hash",
    "observation_probabilities",
    "pick_min_vertex",
    "reduce_rows",
    "refine",
    "region_interior_point",
    "rollout",
    "sacrifice_policy",
    "serialize_model",
    "shift_rewards",
    "simplex_grid",
    "solve_game",
    "solve_stage",
    "successor_matrix",
    "terminal_value",
    "unshift_value",
    "update_belief",
    "validate_belief",
    "validate_model",
    "vertex_count_bound",
    "whole_simplex",
    "write_traces",
]
