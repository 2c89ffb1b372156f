"""Learning stable discrete-time dynamics from demonstrations.

The package trains a noise-free Gaussian-process model of a demonstrated
motion, learns a compatible control Lyapunov function from the same data, and
wraps both in a stabilizing controller that keeps every closed-loop rollout
converging to the origin while staying as close as possible to the learned
dynamics.
"""

from .trajectory import (
    PairSet,
    Trajectory,
    downsample,
    load_dataset,
    load_trajectory_csv,
    save_trajectory_csv,
    to_pairs,
)
from .gp import (
    Hyperparameters,
    GpPosterior,
    default_hyperparameters,
    fit_gp,
    kernel_eval,
    kernel_matrix,
    log_marginal_likelihood,
    optimize_hyperparameters,
)
from .gpssm import Gpssm, train_gpssm
from .npclf import (
    NpClf,
    StageCost,
    clf_log_likelihood,
    difference_kernel_matrix,
    fit_np_clf,
    optimize_clf_hyperparameters,
)
from .baselines import (
    SosClf,
    WsaqfClf,
    fit_baseline,
    fit_sos_clf,
    fit_wsaqf_clf,
    hinge_loss,
    load_clf,
)
from .stabilizer import (
    InitialGuess,
    SolverConfig,
    StabilizedModel,
    StepDiagnostics,
    constraint_value,
)
from .metrics import GridTiming, grid_timing, reproduction_error, resample_arc_length
from .simulate import SimulationResult, simulate
from .datasets import (
    available_shapes,
    synthetic_contraction,
    synthetic_dataset,
    synthetic_shape,
)
from .benchmark import (
    BenchmarkConfig,
    BenchmarkReport,
    export_field,
    run_benchmark,
)

__all__ = [
    "PairSet",
    "Trajectory",
    "downsample",
    "load_dataset",
    "load_trajectory_csv",
    "save_trajectory_csv",
    "to_pairs",
    "Hyperparameters",
    "GpPosterior",
    "default_hyperparameters",
    "fit_gp",
    "kernel_eval",
    "kernel_matrix",
    "log_marginal_likelihood",
    "optimize_hyperparameters",
    "Gpssm",
    "train_gpssm",
    "NpClf",
    "StageCost",
    "clf_log_likelihood",
    "difference_kernel_matrix",
    "fit_np_clf",
    "optimize_clf_hyperparameters",
    "SosClf",
    "WsaqfClf",
    "fit_baseline",
    "fit_sos_clf",
    "fit_wsaqf_clf",
    "hinge_loss",
    "load_clf",
    "InitialGuess",
    "SolverConfig",
    "StabilizedModel",
    "StepDiagnostics",
    "constraint_value",
    "GridTiming",
    "grid_timing",
    "reproduction_error",
    "resample_arc_length",
    "SimulationResult",
    "simulate",
    "available_shapes",
    "synthetic_contraction",
    "synthetic_dataset",
    "synthetic_shape",
    "BenchmarkConfig",
    "BenchmarkReport",
    "export_field",
    "run_benchmark",
]

__version__ = "0.1.0"
