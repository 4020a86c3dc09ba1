"""Closed-loop optimisation of subchannel frequencies inside an optical superchannel."""

from .control_loop import (
    IterationTrace,
    OptimizeResult,
    OptimizerConfig,
    TimingModel,
    iteration_bound,
    optimization_time,
    optimize,
)
from .domain import (
    InfeasibleShiftError,
    InvalidInputError,
    LinkSpec,
    Modulation,
    Objective,
    SnrReport,
    SubchannelSpec,
    SuperchannelPlan,
    objective_value,
)
from .oracle import GridSearchSpec, brute_force
from .plm import PlmModel, SurrogateMonitor, snr

__version__ = "0.1.0"

__all__ = [
    "GridSearchSpec",
    "InfeasibleShiftError",
    "InvalidInputError",
    "IterationTrace",
    "LinkSpec",
    "Modulation",
    "Objective",
    "OptimizeResult",
    "OptimizerConfig",
    "PlmModel",
    "SnrReport",
    "SubchannelSpec",
    "SuperchannelPlan",
    "SurrogateMonitor",
    "TimingModel",
    "brute_force",
    "iteration_bound",
    "objective_value",
    "optimization_time",
    "optimize",
    "snr",
]
