"""Online planners: belief-tree MCTS, MHFR and the SNM switching planner."""

from .mcts import BeliefTreeNode, mcts_plan, subtree_after
from .mhfr import NominalTrajectory, mhfr_plan, score_trajectory
from .snm_planner import PLANNER_TYPES, EpisodeRecord, PlannerSpec, PlannerState, run_episode_with_planner, snm_planner_step

__all__ = [
    "BeliefTreeNode",
    "EpisodeRecord",
    "NominalTrajectory",
    "PlannerSpec",
    "PLANNER_TYPES",
    "PlannerState",
    "mcts_plan",
    "mhfr_plan",
    "run_episode_with_planner",
    "score_trajectory",
    "snm_planner_step",
    "subtree_after",
]
