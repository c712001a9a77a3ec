"""Online physics-informed traffic density estimation from probe vehicles.

Simulate a road's density field, sample it with probe vehicles, and
reconstruct it online with a small physics-informed network retrained over a
sliding window, benchmarked against an open-loop propagation baseline.
"""

from .domain import (
    DensityField,
    EvalGrid,
    FreeFlowSchedule,
    RoadDomain,
    cee,
    greenshield_velocity,
    kmh_to_kmmin,
    kmmin_to_kmh,
    sample_field,
)
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    EstimateUnavailableError,
    TrafficPinnError,
    TrainingError,
)
from .estimators import OnlinePinnEstimator, OpenLoopObserver
from .net import (
    InputScaler,
    Jet,
    MlpParams,
    density_jet,
    forward,
    init_params,
    input_jet,
    load_params,
    param_gradients,
    save_params,
    shift_constant,
    time_shift,
    value_and_slope,
)
from .observer import ObserverConfig, ObserverState, observer_step, run_observer
from .online import (
    EstimateSnapshot,
    OnlineConfig,
    OnlineResult,
    TrainingCostModel,
    evaluate,
    fit_cost_model,
    load_snapshots,
    run_online,
    save_snapshots,
    snapshot_index,
    write_metrics_csv,
)
from .probes import (
    FleetConfig,
    ProbeDataset,
    ProbeTrajectory,
    advance_probe,
    read_probes_csv,
    run_fleet,
    window,
    write_probes_csv,
)
from .solver import (
    BoundarySchedule,
    SolverConfig,
    SolverReport,
    random_boundary_schedule,
    read_field_csv,
    simulate,
    stable_dt,
    step,
    write_field_csv,
)
from .training import (
    Adam,
    CollocationSet,
    LagrangeWeights,
    TrainerConfig,
    TrainState,
    VelocityModel,
    WindowSpec,
    data_loss,
    fresh_state,
    identify_vf,
    physics_loss,
    physics_residual,
    sample_collocation,
    train_window,
    velocity_eval,
)

__version__ = "0.1.0"

__all__ = [
    "Adam", "BoundarySchedule", "CollocationSet", "ConfigError", "DataError",
    "DensityField", "DomainError", "EstimateSnapshot", "EstimateUnavailableError",
    "EvalGrid", "FleetConfig", "FreeFlowSchedule", "InputScaler", "Jet",
    "LagrangeWeights", "MlpParams", "ObserverConfig", "ObserverState",
    "OnlineConfig", "OnlinePinnEstimator", "OnlineResult", "OpenLoopObserver",
    "ProbeDataset", "ProbeTrajectory", "RoadDomain", "SolverConfig",
    "SolverReport", "TrafficPinnError", "TrainerConfig", "TrainState",
    "TrainingCostModel", "TrainingError", "VelocityModel", "WindowSpec",
    "advance_probe", "cee", "data_loss", "density_jet", "evaluate",
    "fit_cost_model", "forward", "fresh_state", "greenshield_velocity",
    "identify_vf", "init_params", "input_jet", "kmh_to_kmmin", "kmmin_to_kmh",
    "load_params", "load_snapshots", "observer_step", "param_gradients",
    "physics_loss", "physics_residual", "random_boundary_schedule",
    "read_field_csv", "read_probes_csv", "run_fleet", "run_observer",
    "run_online", "sample_collocation", "sample_field", "save_params",
    "save_snapshots", "shift_constant", "simulate", "snapshot_index",
    "stable_dt", "step", "time_shift", "train_window", "value_and_slope",
    "velocity_eval", "window", "write_field_csv", "write_metrics_csv",
    "write_probes_csv",
]
