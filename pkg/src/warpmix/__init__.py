"""Similarity-warped mixup: warped interpolation coefficients, calibration
metrics, and a small reproducible training harness."""

from .errors import (
    DatasetError,
    DivergenceError,
    DomainError,
    NonConvergenceError,
    UsageError,
    WarpmixError,
)
from .rng import RngStream
from .special import SHAPE_MAX, SHAPE_MIN, beta_sample, incomplete_beta_reg, log_beta
from .warping import WarpParam, warp, warp_pairwise
from .similarity import (
    FEATURE_BACKENDS,
    KernelConfig,
    batch_taus,
    extract_features,
    kernel_tau,
    normalized_distances,
)
from .mixer import (
    MIX_MODES,
    Batch,
    MixedBatch,
    MixPlan,
    MixupConfig,
    mix_batch,
    mixed_loss,
    sample_permutation,
)
from .metrics import (
    BinningConfig,
    ClassifPrediction,
    PredictiveDistribution,
    accuracy,
    brier,
    ece,
    ence,
    log_softmax,
    nll,
    regression_point_metrics,
    softmax,
    temperature_scale,
    uce,
)
from .model import (
    Layer,
    ModelState,
    OptimizerState,
    backward,
    embed,
    forward,
    init_mlp,
    load_model,
    mc_dropout_predict,
    optimizer_step,
    predictive_distributions,
    save_model,
)
from .data import Dataset, DataSplits, Normalization, load_csv, split
from .harness import (
    DEFAULT_CONFIG,
    ExperimentConfig,
    ExperimentResult,
    GridResult,
    MetricReport,
    TrainResult,
    evaluate,
    grid_search,
    run_experiment,
    train,
)

__version__ = "0.1.0"
