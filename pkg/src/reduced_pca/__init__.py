"""PCA, covariance estimation and denoising for diagonally reduced spiked models."""

from __future__ import annotations

from .covariance import (
    CovEstimate,
    Loss,
    Provenance,
    ShrinkageRule,
    SpikeQuantity,
    alt_estimator,
    asymptotic_loss,
    covariance_losses,
    debias,
    debiased_bulk_edge,
    estimate_covariance,
    estimate_reduction_moments,
    limit_spike,
    optimal_shrinker,
    relative_difference,
    sample_covariance,
    shrink_eigenvalues,
)
from .denoise import (
    AmseReport,
    PluginEstimate,
    amse,
    denoise_matrix,
    denoise_rows,
    denoise_vector,
    estimate_plugin_params,
    optimal_amse,
    optimal_coefficients,
)
from .errors import (
    ConvergenceError,
    DegenerateReductionError,
    DomainError,
    SubcriticalError,
    UnsupportedParameterError,
)
from .model import (
    Basis,
    DataSet,
    DenoiserMode,
    DenoiserSpec,
    NoiseModel,
    ReducedModelConfig,
    ReductionKind,
    SpectralLaw,
    derived_moments,
)
from .mp_law import (
    MPSolution,
    d_transform,
    d_transform_derivative,
    d_transform_inverse,
    ks_distance,
    mp_density,
    mp_distribution,
    solve_general_mp,
    standard_mp_density,
    standard_mp_edge,
    standard_mp_stieltjes,
)
from .simulate import McResult, Quantity, gen_ar1_variances, gen_spiked_data, run_mc
from .spike_maps import (
    SpikedPrediction,
    cos_forward,
    cos_forward_left,
    predict_config,
    predict_general,
    predict_reduced,
    spike_forward,
    spike_inverse,
)

__version__ = "0.1.0"
