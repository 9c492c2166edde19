"""Problem builders for the shipped experiment families."""

from .common import Experiment
from .examples import (
    EXAMPLE2_CURVATURES,
    build_example1,
    build_example2,
    example1_experiment,
    example1_problem,
    example2_experiment,
)
from .lsq import (
    box_lsq_experiment,
    build_box_constrained_lsq,
    build_distributed_lsq,
    lsq_experiment,
)
from .svm import (
    SvmBundle,
    SvmData,
    SvmError,
    SvmState,
    accuracy,
    build_svm,
    centralized_kkt,
    hinge,
    load_svm_csv,
    predict,
    simulate_svm,
    svm_rhs,
    toy_data,
)

__all__ = [
    "EXAMPLE2_CURVATURES",
    "Experiment",
    "SvmBundle",
    "SvmData",
    "SvmError",
    "SvmState",
    "accuracy",
    "box_lsq_experiment",
    "build_box_constrained_lsq",
    "build_distributed_lsq",
    "build_example1",
    "build_example2",
    "build_svm",
    "centralized_kkt",
    "example1_experiment",
    "example1_problem",
    "example2_experiment",
    "hinge",
    "load_svm_csv",
    "lsq_experiment",
    "predict",
    "simulate_svm",
    "svm_rhs",
    "toy_data",
]
