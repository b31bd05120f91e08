"""Group-isolated multi-agent trajectory rollouts with collision avoidance detour resampling."""

from cadsim.cad import CadConfig, CadResult, CollisionReport, cad_resample, detect_collision
from cadsim.errors import CadsimError, PredictorError, RolloutError, SchemaError, ValidationError
from cadsim.kinematics import PoseTrajectory, estimate_headings
from cadsim.metrics import BatchMetrics, compute_batch_metrics, compute_min_ade
from cadsim.predictors import (
    PredictorOutput,
    TrajectoryDistribution,
    predict_constant_velocity,
    predict_from_file,
    predict_synthetic_multimodal,
)
from cadsim.rollout import Rollout, RolloutBatch, RolloutConfig, simulate_batch, simulate_one
from cadsim.scenario import Agent, AgentState, Partition, Scenario, load_scenario, partition_agents

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "AgentState",
    "BatchMetrics",
    "CadConfig",
    "CadResult",
    "CadsimError",
    "CollisionReport",
    "Partition",
    "PoseTrajectory",
    "PredictorError",
    "PredictorOutput",
    "Rollout",
    "RolloutBatch",
    "RolloutConfig",
    "RolloutError",
    "Scenario",
    "SchemaError",
    "TrajectoryDistribution",
    "ValidationError",
    "cad_resample",
    "compute_batch_metrics",
    "compute_min_ade",
    "detect_collision",
    "estimate_headings",
    "load_scenario",
    "partition_agents",
    "predict_constant_velocity",
    "predict_from_file",
    "predict_synthetic_multimodal",
    "simulate_batch",
    "simulate_one",
]
