"""Robust loss kernels, the weighted-loss duality, and adaptive alternation
training with oracle-instrumented synthetic problems."""

__version__ = "0.1.0"

from ._core import BACKEND
from .duality import (
    OutlierProcess,
    duality_residual,
    duality_support,
    outlier_process,
    penalized_argmin_oracle,
)
from .kernels import (
    ConformanceReport,
    DomainError,
    KernelKind,
    ParameterError,
    RobustKernel,
    UnsupportedKernelError,
    conformance_check,
    default_kernels,
    kernel_eval,
    kernel_from_dict,
    kernel_from_string,
    kernel_weight,
    kernel_weight_inverse,
)
from .optim import (
    AAAConfig,
    BaselineConfig,
    RunRecord,
    ScaleUpdate,
    TrainState,
    aaa_step,
    baseline_step,
    coefficient_update,
    parameter_update,
    run_aaa,
    run_baseline,
)
from .problems import (
    ProblemInstance,
    Sample,
    gen_blob_classification,
    gen_linear_regression,
    load_instance,
    save_instance,
)

__all__ = [
    "BACKEND",
    "__version__",
    "AAAConfig",
    "BaselineConfig",
    "ConformanceReport",
    "DomainError",
    "KernelKind",
    "OutlierProcess",
    "ParameterError",
    "ProblemInstance",
    "RobustKernel",
    "RunRecord",
    "Sample",
    "ScaleUpdate",
    "TrainState",
    "UnsupportedKernelError",
    "aaa_step",
    "baseline_step",
    "coefficient_update",
    "conformance_check",
    "default_kernels",
    "duality_residual",
    "duality_support",
    "gen_blob_classification",
    "gen_linear_regression",
    "kernel_eval",
    "kernel_from_dict",
    "kernel_from_string",
    "kernel_weight",
    "kernel_weight_inverse",
    "load_instance",
    "outlier_process",
    "parameter_update",
    "penalized_argmin_oracle",
    "run_aaa",
    "run_baseline",
    "save_instance",
]
