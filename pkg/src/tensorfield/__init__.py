"""Reconstruct 3D sound-speed fields from sparse samples with tensor neural networks."""

from .baselines import (
    SplineModel,
    TuckerAlsConfig,
    TuckerAlsResult,
    spline_fit,
    spline_predict,
    spline_predict_grid,
    tucker_als,
    tucker_als_complete,
)
from .config import ConfigError, RunConfig, load_config, parse_config
from .grad import LossSpec, backward, loss, tv, tv_subgradient
from .model import (
    Activation,
    LayerSpec,
    ModelConfig,
    TnnParams,
    collapse_linear_tnn,
    default_config,
    init_params,
    param_count,
    tnn_forward,
    tucker_config,
)
from .optim import NonFiniteLossError, OptimizerConfig, TrainTrace, adam_step, fit, gd_step
from .recon import (
    ErrorDecomposition,
    NoiseSpec,
    ObservationSet,
    ReconReport,
    SamplingSpec,
    decompose,
    error_decomposition,
    noise_fit_experiment,
    observe,
    prop1_bound,
    reconstruct,
    rmse,
    sample_mask,
)
from .synth import synthetic_field
from .tensor import (
    ShapeError,
    inner_product,
    frobenius_norm_sq,
    mode_n_fold,
    mode_n_product,
    mode_n_unfold,
    tucker_compose,
    unvectorize,
    vectorize,
)

__version__ = "0.1.0"
