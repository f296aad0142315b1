# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Reference approximations: V-mean, Linformer and Informer-style row selection."""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import numpy.typing as npt

from .config import DEFAULT_ORACLE_CAP
from .core import AttentionInput, DenseMatrix, RngSeed
from .errors import InvalidArgumentError
from .oracle import attention_logits, exact_attention, masked_softmax, score_matrices
from .sketch import SketchKind, SketchSpec, materialize_sketch


class BaselineMethod(str, Enum):
    """Baseline approximations."""

    VMEAN = "vmean"
    LINFORMER = "linformer"
    LINFORMER_UNREDUCED = "linformer_unreduced"
    INFORMER = "informer"


@dataclass(frozen=True)
class BaselineConfig:
    """Settings of one baseline call; ``d`` is ignored by V-mean."""

    method: BaselineMethod
    d: int = 1
    seed: RngSeed = field(default_factory=RngSeed)

    def __post_init__(self):
        method = BaselineMethod(self.method)
        object.__setattr__(self, "method", method)
        if method is not BaselineMethod.VMEAN and self.d < 1:
            raise InvalidArgumentError(f"d must be >= 1, got {self.d}")


def _freeze(matrix: DenseMatrix) -> DenseMatrix:
    matrix.flags.writeable = False
    return matrix


def vmean_attention(inp: AttentionInput) -> DenseMatrix:
    """Every unpadded row is the mean of the unpadded rows of V."""
    out = np.zeros((inp.n, inp.p))
    out[: inp.m] = inp.v[: inp.m].mean(axis=0)
    return _freeze(out)


def _gaussian_sketch(inp: AttentionInput, d: int, seed: RngSeed) -> DenseMatrix:
    # Rows for padded positions stay zero so padding never enters SᵀK or SᵀV.
    sketch = np.zeros((inp.n, d))
    sketch[: inp.m] = materialize_sketch(
        SketchSpec(SketchKind.GAUSSIAN, d, seed, size=inp.m)
    )
    return sketch


def _check_sketch(inp: AttentionInput, sketch: DenseMatrix) -> DenseMatrix:
    sketch = np.asarray(sketch, dtype=np.float64)
    if sketch.ndim != 2 or sketch.shape[0] != inp.n:
        raise InvalidArgumentError(
            f"sketch must have {inp.n} rows, got shape {sketch.shape}"
        )
    return sketch


def linformer_attention(
    inp: AttentionInput,
    d: int,
    seed: RngSeed,
    sketch: DenseMatrix | None = None,
) -> DenseMatrix:
    """Practical Linformer form softmax((QKᵀ/√p)S)·(SᵀV) with Gaussian S.

    The softmax runs over the d sketched columns. Cost is O(n·d·p) since
    (QKᵀ)S is evaluated as Q(SᵀK)ᵀ. ``sketch`` overrides the random S.
    """
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    s = _gaussian_sketch(inp, d, seed) if sketch is None else _check_sketch(inp, sketch)

    sketched_keys = s.T @ inp.k
    sketched_values = s.T @ inp.v
    logits = (inp.q @ sketched_keys.T) / math.sqrt(inp.p)
    weights = masked_softmax(logits, logits.shape[1])

    out = np.zeros((inp.n, inp.p))
    out[: inp.m] = weights[: inp.m] @ sketched_values
    return _freeze(out)


def linformer_unreduced(
    inp: AttentionInput,
    d: int,
    seed: RngSeed,
    sketch: DenseMatrix | None = None,
    cap: int = DEFAULT_ORACLE_CAP,
) -> DenseMatrix:
    """Unreduced JL form B·S·(SᵀV), which needs the whole score matrix.

    Raises:
        ResourceLimitError: If n exceeds ``cap``
    """
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    scores = score_matrices(inp, cap=cap)
    s = _gaussian_sketch(inp, d, seed) if sketch is None else _check_sketch(inp, sketch)
    out = (scores.b @ s) @ (s.T @ inp.v)
    out[inp.m :] = 0.0
    return _freeze(out)


def sparsity_from_logits(logits: DenseMatrix) -> npt.NDArray[np.float64]:
    """Per-row M = ln(arithmetic mean of exp(logits)) − mean(logits)."""
    shift = logits.max(axis=1, keepdims=True)
    log_mean = np.log(np.mean(np.exp(logits - shift), axis=1)) + shift[:, 0]
    return np.maximum(log_mean - logits.mean(axis=1), 0.0)


def informer_sparsity(score_row: npt.ArrayLike) -> float:
    """Sparsity measurement M = ln(arithmetic mean) − ln(geometric mean) of a row.

    The row must be strictly positive; M >= 0 and is invariant to scaling.
    """
    row = np.asarray(score_row, dtype=np.float64)
    if row.ndim != 1 or row.size == 0 or np.any(row <= 0):
        raise InvalidArgumentError("score row must be a non-empty positive vector")
    return float(sparsity_from_logits(np.log(row)[None, :])[0])


def select_informer_rows(
    inp: AttentionInput, d: int, seed: RngSeed
) -> npt.NDArray[np.intp]:
    """Pick the d unpadded query rows with the largest estimated sparsity.

    M is estimated for every unpadded row from d key columns drawn uniformly
    with replacement from the unpadded range. Rows come back in selection
    order: descending M, ties by lower index.
    """
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    m = inp.m
    if d >= m:
        return np.arange(m, dtype=np.intp)
    columns = seed.generator().integers(0, m, size=d)
    estimate = sparsity_from_logits(attention_logits(inp.q[:m], inp.k[columns]))
    return np.argsort(-estimate, kind="stable")[:d].astype(np.intp)


def informer_attention(inp: AttentionInput, d: int, seed: RngSeed) -> DenseMatrix:
    """Informer-style row selection with the mean of V on un-selected rows.

    Selected rows are exact softmax rows over the unpadded keys.
    """
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    if d >= inp.m:
        return exact_attention(inp)

    rows = select_informer_rows(inp, d, seed)
    out = np.array(vmean_attention(inp))
    out[rows] = masked_softmax(attention_logits(inp.q[rows], inp.k), inp.m) @ inp.v
    return _freeze(out)


def run_baseline(inp: AttentionInput, cfg: BaselineConfig) -> DenseMatrix:
    """Dispatch ``cfg.method``."""
    if cfg.method is BaselineMethod.VMEAN:
        return vmean_attention(inp)
    if cfg.method is BaselineMethod.LINFORMER:
        return linformer_attention(inp, cfg.d, cfg.seed)
    if cfg.method is BaselineMethod.LINFORMER_UNREDUCED:
        return linformer_unreduced(inp, cfg.d, cfg.seed)
    return informer_attention(inp, cfg.d, cfg.seed)
