# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Skeinformer: column-sampled attention with adaptive row normalization.

The approximation runs in O(n·d) time and memory:

1. pilot sampling: d query rows J drawn uniformly (with replacement) from the
   unpadded range, and their exact score rows B_J;
2. column sampling: d key/value indices J′ drawn without replacement with the
   probabilities estimated from B_J and the row norms of V;
3. adaptive row normalization: every row sum is estimated from the selected
   scores plus (m − d) copies of their geometric mean, and the un-selected
   values enter through the same geometric mean;
4. pilot sampling reutilization: the rows J of the output are replaced by
   the exact B_J·V.

Scores are handled in the log domain with a per-row offset. Every quantity
that depends on the exponentiated scores of row i (A^{J′}, g, d) is stored
relative to ``row_shift[i]``; the output is invariant to that offset.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import numpy.typing as npt
import sentry_sdk

from .core import AttentionInput, DenseMatrix, RngSeed
from .errors import InvalidArgumentError, NumericalError
from .oracle import attention_logits, exact_attention, masked_softmax
from .sketch import (
    Probabilities,
    SketchKind,
    SketchSpec,
    draw_subsample,
    normalize_weights,
)


class Sampling(str, Enum):
    """How the column indices J′ are drawn."""

    IMPORTANCE = "importance"
    UNIFORM = "uniform"


class RowNorm(str, Enum):
    """How the softmax row sums are estimated."""

    ADAPTIVE = "adaptive"
    SIMPLE = "simple"
    OFF = "off"


@dataclass(frozen=True)
class SkeinConfig:
    """Settings of one Skeinformer call.

    Attributes:
        d: Sub-sample size
        sampling: Importance sampling from the pilot estimate, or uniform
        row_norm: Adaptive (geometric-mean fill), simple (m/d rescaling) or off
        reuse_pilot: Overwrite the pilot rows of the output with exact values
        seed: Seed of the pilot and column draws
    """

    d: int
    sampling: Sampling = Sampling.IMPORTANCE
    row_norm: RowNorm = RowNorm.ADAPTIVE
    reuse_pilot: bool = True
    seed: RngSeed = field(default_factory=RngSeed)

    def __post_init__(self):
        if self.d < 1:
            raise InvalidArgumentError(f"d must be >= 1, got {self.d}")
        object.__setattr__(self, "sampling", Sampling(self.sampling))
        object.__setattr__(self, "row_norm", RowNorm(self.row_norm))


@dataclass(frozen=True, eq=False)
class SkeinTrace:
    """Intermediates of one Skeinformer call, exposed for inspection.

    Attributes:
        j: Pilot row indices (empty when no pilot was drawn)
        b_j: Exact score rows of the pilot, d×n
        p_hat: Column sampling probabilities actually used
        j_prime: Sampled column indices
        a_jp: Selected scores exp(QK_{J′}ᵀ/√p), n×d′, relative to row_shift
        row_shift: Per-row log offset of a_jp, g and d_vec
        g: Geometric mean of the selected scores per row, relative to row_shift
        d_vec: Estimated row sums, relative to row_shift
        v: Sum of the un-selected unpadded rows of V
        r: Output, n×p
        score_entries: Number of score-matrix entries computed
        exact_fallback: True when d >= m and exact attention was returned
        uniform_fallback: True when the pilot estimate degenerated to uniform
    """

    j: npt.NDArray[np.intp]
    b_j: DenseMatrix
    p_hat: npt.NDArray[np.float64]
    j_prime: npt.NDArray[np.intp]
    a_jp: DenseMatrix
    row_shift: npt.NDArray[np.float64]
    g: npt.NDArray[np.float64]
    d_vec: npt.NDArray[np.float64]
    v: npt.NDArray[np.float64]
    r: DenseMatrix
    score_entries: int
    exact_fallback: bool = False
    uniform_fallback: bool = False

    @property
    def d_effective(self) -> int:
        """Number of columns actually sampled."""
        return int(self.j_prime.size)


def pilot_sample(m: int, d: int, seed: RngSeed) -> npt.NDArray[np.intp]:
    """Draw d query indices uniformly with replacement from [0, m)."""
    if m < 1:
        raise InvalidArgumentError(f"unpadded length must be >= 1, got {m}")
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    return seed.generator().integers(0, m, size=d).astype(np.intp)


def pilot_scores(inp: AttentionInput, j: npt.NDArray[np.intp]) -> DenseMatrix:
    """Exact normalized score rows B_J = softmax(Q_J Kᵀ/√p), padded columns 0."""
    j = np.asarray(j, dtype=np.intp)
    if j.size and (j.min() < 0 or j.max() >= inp.m):
        raise InvalidArgumentError(f"pilot indices must lie in [0, {inp.m})")
    return masked_softmax(attention_logits(inp.q[j], inp.k), inp.m)


def estimate_probs(b_j: DenseMatrix, v: DenseMatrix, m: int) -> Probabilities:
    """Column probabilities p̂_i ∝ (Σ_k b_{j_k i}²)^{1/2}·‖V_{(i)}‖.

    Padded indices get 0. A zero normalizer falls back to uniform over [0, m).
    """
    if b_j.shape[1] != v.shape[0]:
        raise InvalidArgumentError(
            f"shape mismatch: B_J is {b_j.shape}, V is {v.shape}"
        )
    weights = np.sqrt(np.sum(b_j**2, axis=0)) * np.linalg.norm(v, axis=1)
    return normalize_weights(weights, m, "estimate_probs")


def row_norm_estimate(
    a_jp: DenseMatrix,
    g: npt.NDArray[np.float64],
    n_effective: int,
    mode: RowNorm,
) -> npt.NDArray[np.float64]:
    """Estimate the softmax row sums from the selected scores.

    adaptive: Σ_k a_{ij′_k} + (m − d)·g_i
    simple:   (m/d)·Σ_k a_{ij′_k}
    off:      Σ_k a_{ij′_k}

    Raises:
        NumericalError: If an estimate is not strictly positive and finite
    """
    mode = RowNorm(mode)
    d = a_jp.shape[1]
    selected = a_jp.sum(axis=1)
    if mode is RowNorm.ADAPTIVE:
        d_vec = selected + (n_effective - d) * g
    elif mode is RowNorm.SIMPLE:
        d_vec = (n_effective / d) * selected
    else:
        d_vec = selected

    if not np.all(np.isfinite(d_vec) & (d_vec > 0)):
        raise NumericalError("row sum estimate underflowed or is not finite")
    return d_vec


def _exact_trace(inp: AttentionInput) -> tuple[DenseMatrix, SkeinTrace]:
    r = exact_attention(inp)
    empty = np.zeros(0, dtype=np.intp)
    trace = SkeinTrace(
        j=empty,
        b_j=np.zeros((0, inp.n)),
        p_hat=np.zeros(inp.n),
        j_prime=empty,
        a_jp=np.zeros((inp.n, 0)),
        row_shift=np.zeros(inp.n),
        g=np.zeros(inp.n),
        d_vec=np.zeros(inp.n),
        v=np.zeros(inp.p),
        r=r,
        score_entries=inp.n * inp.n,
        exact_fallback=True,
    )
    return r, trace


def skein_attention(
    inp: AttentionInput, cfg: SkeinConfig
) -> tuple[DenseMatrix, SkeinTrace]:
    """Approximate softmax(QKᵀ/√p)V with Skeinformer.

    Falls back to exact attention when d >= m.

    Returns:
        Tuple of (output, trace)
    """
    n, m, d = inp.n, inp.m, cfg.d
    if d >= m:
        return _exact_trace(inp)

    score_entries = 0
    j = np.zeros(0, dtype=np.intp)
    b_j = np.zeros((0, n))
    if cfg.sampling is Sampling.IMPORTANCE or cfg.reuse_pilot:
        j = pilot_sample(m, d, cfg.seed.substream(0))
        b_j = pilot_scores(inp, j)
        score_entries += d * n

    if cfg.sampling is Sampling.IMPORTANCE:
        probs = estimate_probs(b_j, inp.v, m)
    else:
        probs = normalize_weights(np.ones(n), m, "uniform column sampling")

    positive = int(np.count_nonzero(probs.values))
    d_col = min(d, positive)
    if d_col < d:
        sentry_sdk.add_breadcrumb(
            category="skein",
            message=f"{positive} positive-probability columns, d reduced from {d}",
            level="info",
        )

    j_prime = draw_subsample(
        SketchSpec(
            SketchKind.SUBSAMPLE_WITHOUT_REPLACEMENT,
            d_col,
            cfg.seed.substream(1),
            probs=probs.values,
        )
    ).indices

    logits = attention_logits(inp.q, inp.k[j_prime])
    score_entries += n * d_col
    row_shift = logits.max(axis=1)
    a_jp = np.exp(logits - row_shift[:, None])
    r_jp = a_jp @ inp.v[j_prime]
    g = np.exp(logits.mean(axis=1) - row_shift)

    d_vec = row_norm_estimate(a_jp, g, m, cfg.row_norm)

    selected = np.zeros(m, dtype=bool)
    selected[j_prime] = True
    v_rest = inp.v[:m][~selected].sum(axis=0)

    if cfg.row_norm is RowNorm.OFF:
        r = r_jp / d_vec[:, None]
    else:
        r = (r_jp + np.outer(g, v_rest)) / d_vec[:, None]

    if cfg.reuse_pilot:
        r[j] = b_j @ inp.v
    r[m:] = 0.0

    if not np.all(np.isfinite(r)):
        raise NumericalError("non-finite entry in the Skeinformer output")
    r.flags.writeable = False

    trace = SkeinTrace(
        j=j,
        b_j=b_j,
        p_hat=probs.values,
        j_prime=j_prime,
        a_jp=a_jp,
        row_shift=row_shift,
        g=g,
        d_vec=d_vec,
        v=v_rest,
        r=r,
        score_entries=score_entries,
        uniform_fallback=probs.uniform_fallback,
    )
    return r, trace
