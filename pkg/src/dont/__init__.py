"""dont: learn transport maps between point clouds with a velocity-field flow."""

from .config import ExperimentConfig, load_config, parse_config
from .costs import CostSpec, MaskReport, dynamic_cost, fit_sparse_mask, pairwise_cost
from .discrepancy import DiscrepancySpec, discrepancy_value, permutation_threshold
from .estimator import DynamicTranslator
from sklearn.exceptions import NotFittedError

from .exceptions import (
    ConfigError,
    ConvergenceError,
    DivergenceError,
    DontError,
    ValidationError,
)
from .flow import (
    FlowModel,
    Trajectory,
    VelocityStep,
    exact_inverse,
    forward,
    init,
    load_checkpoint,
    reverse,
    save_checkpoint,
)
from .measures import DatasetSpec, EmpiricalMeasure, make_dataset
from .numerics import Rng
from .oracles import (
    IllPosedMap,
    OracleResult,
    illposed_construct,
    mccann,
    ot_1d,
    ot_exact,
    ot_gaussian,
)
from .training import (
    LambdaSchedule,
    TrainConfig,
    TrainReport,
    train,
    train_cycle_baseline,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "CostSpec",
    "DatasetSpec",
    "DiscrepancySpec",
    "DivergenceError",
    "DontError",
    "DynamicTranslator",
    "EmpiricalMeasure",
    "ExperimentConfig",
    "FlowModel",
    "IllPosedMap",
    "LambdaSchedule",
    "MaskReport",
    "NotFittedError",
    "OracleResult",
    "Rng",
    "TrainConfig",
    "TrainReport",
    "Trajectory",
    "ValidationError",
    "VelocityStep",
    "discrepancy_value",
    "dynamic_cost",
    "exact_inverse",
    "fit_sparse_mask",
    "forward",
    "illposed_construct",
    "init",
    "load_checkpoint",
    "load_config",
    "make_dataset",
    "mccann",
    "ot_1d",
    "ot_exact",
    "ot_gaussian",
    "pairwise_cost",
    "parse_config",
    "permutation_threshold",
    "reverse",
    "save_checkpoint",
    "train",
    "train_cycle_baseline",
]
