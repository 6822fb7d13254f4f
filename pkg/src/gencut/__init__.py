"""Inverse imaging with cut-generator signal priors.

Train small block-structured image generators, remove initial blocks at
inversion time to enlarge the optimizable latent representation, and solve
compressed-sensing / inpainting / super-resolution problems by latent
optimization. Includes a Lasso-over-DCT sparsity baseline, a joint
latent+weight refinement method, and an empirical study harness.
"""

from gencut.autodiff import NonFiniteError, ShapeError, Tensor
from gencut.datasets import Dataset, generate_synthetic_dataset, load_image_folder
from gencut.generator import (
    CutGenerator,
    GeneratorNet,
    WeightFormatError,
    build_generator,
    cut,
    forward_cut,
    lift,
    load_weights,
    overparam_ratio,
    param_count,
    sample,
    save_weights,
)
from gencut.lasso import DctBasis, lasso_dct_solve, soft_threshold
from gencut.metrics import (
    StudyReport,
    compute_budget_study,
    psnr,
    representation_error_study,
    untrained_weights_study,
)
from gencut.recovery import (
    InitStrategy,
    RecoveryConfig,
    RecoveryError,
    RecoveryResult,
    Stage2Config,
    iagan_refine,
    init_latent,
    preset_config,
    recover,
    recover_uncut,
    select_cut_index,
)
from gencut.sensing import Measurement, MeasurementOperator, make_operator, measure, noise_sigma
from gencut.training import TrainConfig, train_vae

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "NonFiniteError",
    "ShapeError",
    "Dataset",
    "generate_synthetic_dataset",
    "load_image_folder",
    "GeneratorNet",
    "CutGenerator",
    "WeightFormatError",
    "build_generator",
    "cut",
    "lift",
    "forward_cut",
    "sample",
    "param_count",
    "overparam_ratio",
    "save_weights",
    "load_weights",
    "DctBasis",
    "lasso_dct_solve",
    "soft_threshold",
    "psnr",
    "StudyReport",
    "representation_error_study",
    "untrained_weights_study",
    "compute_budget_study",
    "InitStrategy",
    "RecoveryConfig",
    "RecoveryResult",
    "RecoveryError",
    "Stage2Config",
    "init_latent",
    "preset_config",
    "recover",
    "recover_uncut",
    "iagan_refine",
    "select_cut_index",
    "Measurement",
    "MeasurementOperator",
    "make_operator",
    "measure",
    "noise_sigma",
    "TrainConfig",
    "train_vae",
    "__version__",
]
