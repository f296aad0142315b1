# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""sketchattn - Sketching-based softmax attention approximations.

This package provides exact softmax attention, Skeinformer and reference
approximations (Informer-style row selection, Linformer, V-mean), error
measurement in spectral and Frobenius norm, and Monte Carlo verifiers of the
sub-sampling error bounds.
"""

__version__ = "0.1.0"

from .baselines import (
    BaselineConfig,
    BaselineMethod,
    informer_attention,
    informer_sparsity,
    linformer_attention,
    linformer_unreduced,
    run_baseline,
    select_informer_rows,
    vmean_attention,
)
from .bench import (
    BenchRunner,
    SweepConfig,
    ceiling_violations,
    run_method,
    run_scaling,
)
from .config import Config
from .core import (
    AttentionInput,
    RngSeed,
    generate_gaussian_matrix,
    random_attention_input,
    read_matrix,
    write_matrix,
)
from .errors import (
    InvalidArgumentError,
    MatrixFormatError,
    NumericalError,
    ResourceLimitError,
    SanityCheckError,
    SketchAttentionError,
)
from .metrics import (
    BoundParams,
    ErrorReport,
    error_report,
    flops_estimate,
    power_iteration,
    spectral_norm,
    verify_jl,
    verify_lemma1,
    verify_prop1,
    verify_sketch_unbiased,
)
from .oracle import exact_attention, score_matrices
from .skein import (
    RowNorm,
    Sampling,
    SkeinConfig,
    SkeinTrace,
    estimate_probs,
    pilot_sample,
    row_norm_estimate,
    skein_attention,
)
from .sketch import (
    SketchKind,
    SketchSpec,
    draw_subsample,
    jl_distortion_check,
    materialize_sketch,
    optimal_subsample_probs,
)

__all__ = [
    "AttentionInput",
    "BaselineConfig",
    "BaselineMethod",
    "BenchRunner",
    "BoundParams",
    "Config",
    "ErrorReport",
    "InvalidArgumentError",
    "MatrixFormatError",
    "NumericalError",
    "ResourceLimitError",
    "RngSeed",
    "RowNorm",
    "Sampling",
    "SanityCheckError",
    "SketchAttentionError",
    "SketchKind",
    "SketchSpec",
    "SkeinConfig",
    "SkeinTrace",
    "SweepConfig",
    "ceiling_violations",
    "draw_subsample",
    "error_report",
    "estimate_probs",
    "exact_attention",
    "flops_estimate",
    "generate_gaussian_matrix",
    "informer_attention",
    "informer_sparsity",
    "jl_distortion_check",
    "linformer_attention",
    "linformer_unreduced",
    "materialize_sketch",
    "optimal_subsample_probs",
    "pilot_sample",
    "power_iteration",
    "random_attention_input",
    "read_matrix",
    "row_norm_estimate",
    "run_baseline",
    "run_method",
    "run_scaling",
    "score_matrices",
    "select_informer_rows",
    "skein_attention",
    "spectral_norm",
    "verify_jl",
    "verify_lemma1",
    "verify_prop1",
    "verify_sketch_unbiased",
    "vmean_attention",
    "write_matrix",
]
