"""Deterministic cloud task scheduling: simulator, schedulers, benchmarks.

The package splits into workload modeling (workload), a discrete event
simulator with an online stepping variant (simulator), reward shaping and
demand profile analysis (rewards), quality-of-service metrics (metrics),
assignment search (schedulers), a policy gradient dispatcher (policy) and
the sweep harness behind the `bench` command (bench, cli).
"""

from .bench import (
    ExperimentConfig,
    SchedulerSpec,
    SweepConfig,
    TrainSetup,
    VmFleetConfig,
    compute_deltas,
    config_from_dict,
    default_config,
    emit_report,
    load_config,
    run_cell_group,
    run_experiment,
    run_training,
    summarize,
)
from .errors import (
    ConfigurationError,
    DagValidationError,
    InstanceTooLargeError,
    SimulationError,
    TrainingError,
)
from .metrics import (
    MetricReport,
    QosWeights,
    RawQos,
    load_rate,
    machine_usage_totals,
    money_cost,
    multi_qos,
    qos_scores,
    raw_qos,
    reliability,
    time_cost,
)
from .policy import (
    EncoderScales,
    PolicyParams,
    SchedulingEnv,
    TrainConfig,
    Trajectory,
    compute_returns,
    encode_state,
    evaluate_policy,
    init_policy,
    load_policy,
    policy_forward,
    reinforce_update,
    save_policy,
    train,
    valid_actions,
)
from .rewards import (
    ClusterModel,
    ProfileFeatures,
    RewardBreakdown,
    RewardConfig,
    competition_penalty,
    dtw_distance,
    extract_features,
    kmeans_cluster,
    kmeans_elbow,
    overuse_penalty,
    reward_breakdown,
    total_reward,
    utilization_penalty,
    wait_penalty,
)
from .schedulers import (
    AcoParams,
    GaacoParams,
    SaParams,
    aco_schedule,
    brute_force_schedule,
    eft_schedule,
    fitness,
    gaaco_schedule,
    sa_accept,
    sa_schedule,
)
from .simulator import (
    SimState,
    SimTrace,
    TaskRecord,
    earliest_start_time,
    init_state,
    replay_assignment,
    run_simulation,
    scan_overuse,
    step,
)
from .workload import (
    DagWorkflow,
    Task,
    TaskGenParams,
    UsageProfile,
    VmSpec,
    WorkloadSet,
    generate_profiles,
    generate_tasks,
    load_workload,
    save_workload,
    validate_dag,
)

__version__ = "0.1.0"

__all__ = [
    "AcoParams",
    "ClusterModel",
    "ConfigurationError",
    "DagValidationError",
    "DagWorkflow",
    "EncoderScales",
    "ExperimentConfig",
    "GaacoParams",
    "InstanceTooLargeError",
    "MetricReport",
    "PolicyParams",
    "ProfileFeatures",
    "QosWeights",
    "RawQos",
    "RewardBreakdown",
    "RewardConfig",
    "SaParams",
    "SchedulerSpec",
    "SchedulingEnv",
    "SimState",
    "SimTrace",
    "SimulationError",
    "SweepConfig",
    "Task",
    "TaskGenParams",
    "TaskRecord",
    "TrainConfig",
    "TrainSetup",
    "TrainingError",
    "Trajectory",
    "UsageProfile",
    "VmFleetConfig",
    "VmSpec",
    "WorkloadSet",
    "aco_schedule",
    "brute_force_schedule",
    "competition_penalty",
    "compute_deltas",
    "compute_returns",
    "config_from_dict",
    "default_config",
    "dtw_distance",
    "earliest_start_time",
    "eft_schedule",
    "emit_report",
    "encode_state",
    "evaluate_policy",
    "extract_features",
    "fitness",
    "gaaco_schedule",
    "generate_profiles",
    "generate_tasks",
    "init_policy",
    "init_state",
    "kmeans_cluster",
    "kmeans_elbow",
    "load_config",
    "load_policy",
    "load_rate",
    "load_workload",
    "machine_usage_totals",
    "money_cost",
    "multi_qos",
    "overuse_penalty",
    "policy_forward",
    "qos_scores",
    "raw_qos",
    "reinforce_update",
    "reliability",
    "replay_assignment",
    "reward_breakdown",
    "run_cell_group",
    "run_experiment",
    "run_simulation",
    "run_training",
    "sa_accept",
    "sa_schedule",
    "save_policy",
    "save_workload",
    "scan_overuse",
    "step",
    "summarize",
    "time_cost",
    "total_reward",
    "train",
    "utilization_penalty",
    "valid_actions",
    "validate_dag",
    "wait_penalty",
]
