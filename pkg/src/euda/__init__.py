"""Unsupervised domain adaptation over precomputed feature vectors.

A fully-connected bottleneck and linear classifier train on labeled source
features while a kernel two-sample penalty pulls the unlabeled target
representation onto the source one. Everything is plain NumPy with exact
reverse-mode gradients and deterministic seeding.
"""

from .errors import (
    ConfigError,
    ConsistencyError,
    ContractError,
    DataError,
    DivergenceError,
    EudaError,
    FormatError,
)
from .feature_store import (
    BatchPair,
    DomainDataset,
    SynthSpec,
    format_for_path,
    load_dataset,
    paired_batches,
    save_dataset,
    synth_shifted_gaussians,
)
from .kernels_mmd import (
    KernelSpec,
    median_heuristic,
    mmd2_biased,
    mmd2_grad,
    mmd2_unbiased,
    resolve_bandwidths,
    resolve_kernel,
)
from .loss import LossBreakdown, sdal_combine, softmax_cross_entropy
from .network import (
    BOTTLENECK_PRESETS,
    BottleneckConfig,
    ModelParams,
    backward,
    build_model,
    count_for_shape,
    count_trainable,
    forward,
    forward_eval,
    load_checkpoint,
    save_checkpoint,
)
from .trainer import (
    InvDecaySchedule,
    MetricsRecord,
    TrainConfig,
    evaluate,
    grad_check,
    train,
)

__version__ = "1.0.0"

__all__ = [
    "BOTTLENECK_PRESETS",
    "BatchPair",
    "BottleneckConfig",
    "ConfigError",
    "ConsistencyError",
    "ContractError",
    "DataError",
    "DivergenceError",
    "DomainDataset",
    "EudaError",
    "FormatError",
    "InvDecaySchedule",
    "KernelSpec",
    "LossBreakdown",
    "MetricsRecord",
    "ModelParams",
    "SynthSpec",
    "TrainConfig",
    "backward",
    "build_model",
    "count_for_shape",
    "count_trainable",
    "evaluate",
    "format_for_path",
    "forward",
    "forward_eval",
    "grad_check",
    "load_checkpoint",
    "load_dataset",
    "median_heuristic",
    "mmd2_biased",
    "mmd2_grad",
    "mmd2_unbiased",
    "paired_batches",
    "resolve_bandwidths",
    "resolve_kernel",
    "save_checkpoint",
    "save_dataset",
    "sdal_combine",
    "softmax_cross_entropy",
    "synth_shifted_gaussians",
    "train",
]
