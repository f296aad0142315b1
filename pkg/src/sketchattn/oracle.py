# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Exact softmax self-attention, the ground truth for every approximation."""

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import sentry_sdk

from .config import DEFAULT_ORACLE_CAP
from .core import AttentionInput, DenseMatrix
from .errors import NumericalError, ResourceLimitError

ORACLE_BLOCK_ROWS = 1024


def attention_logits(q_rows: DenseMatrix, k: DenseMatrix) -> DenseMatrix:
    """Scaled dot products Q_rows Kᵀ / √p."""
    return (q_rows @ k.T) / math.sqrt(k.shape[1])


def masked_softmax(logits: DenseMatrix, unpadded_len: int) -> DenseMatrix:
    """Row softmax over the first ``unpadded_len`` columns.

    Columns at or beyond ``unpadded_len`` get probability exactly 0.
    """
    masked = np.full_like(logits, -np.inf)
    masked[:, :unpadded_len] = logits[:, :unpadded_len]
    shifted = masked - masked.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class ScoreMatrices:
    """Explicit n×n score matrices.

    Attributes:
        a: Un-normalized scores exp(QKᵀ/√p); padded rows and columns are 0
        row_sums: Row sums of ``a`` (the diagonal of D)
        b: Normalized scores D⁻¹A; padded rows are 0
    """

    a: DenseMatrix
    row_sums: npt.NDArray[np.float64]
    b: DenseMatrix


def exact_attention(inp: AttentionInput) -> DenseMatrix:
    """Compute softmax(QKᵀ/√p)V with padding excluded from the softmax.

    Rows are processed in fixed-size blocks so memory stays O(block·n).
    Padded output rows are zero.
    """
    m = inp.m
    out = np.zeros((inp.n, inp.p))
    for start in range(0, m, ORACLE_BLOCK_ROWS):
        stop = min(start + ORACLE_BLOCK_ROWS, m)
        logits = attention_logits(inp.q[start:stop], inp.k)
        out[start:stop] = masked_softmax(logits, m) @ inp.v
    out.flags.writeable = False
    return out


def score_matrices(inp: AttentionInput, cap: int = DEFAULT_ORACLE_CAP) -> ScoreMatrices:
    """Materialize A, D and B = D⁻¹A.

    Raises:
        ResourceLimitError: If n exceeds ``cap``
        NumericalError: If exp of a logit overflows (B stays well defined, A does not)
    """
    n, m = inp.n, inp.m
    if n > cap:
        sentry_sdk.add_breadcrumb(
            category="oracle",
            message=f"score_matrices refused n={n} above cap {cap}",
            level="warning",
        )
        raise ResourceLimitError(
            f"n={n} exceeds the oracle cap of {cap}; use an approximation instead"
        )

    logits = attention_logits(inp.q[:m], inp.k)

    a = np.zeros((n, n))
    with np.errstate(over="ignore"):
        a[:m, :m] = np.exp(logits[:, :m])
    if not np.all(np.isfinite(a)):
        raise NumericalError("exp(QKᵀ/√p) overflows float64 for this input")
    row_sums = a.sum(axis=1)

    b = np.zeros((n, n))
    b[:m] = masked_softmax(logits, m)

    for matrix in (a, row_sums, b):
        matrix.flags.writeable = False
    return ScoreMatrices(a=a, row_sums=row_sums, b=b)
