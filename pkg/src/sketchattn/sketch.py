# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Sketching matrices and the sampling probabilities that drive them.

Two families are provided: sub-sampling sketches, whose columns are scaled
standard basis vectors, and Gaussian (Johnson-Lindenstrauss) sketches. Both
are built so that E[SSᵀ] = I.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
import sentry_sdk

from .core import DenseMatrix, RngSeed, as_matrix
from .errors import InvalidArgumentError

PROB_TOLERANCE = 1e-12


class SketchKind(str, Enum):
    """Kinds of sketching matrices."""

    SUBSAMPLE_WITH_REPLACEMENT = "subsample_with_replacement"
    SUBSAMPLE_WITHOUT_REPLACEMENT = "subsample_without_replacement"
    GAUSSIAN = "gaussian"

    @property
    def is_subsample(self) -> bool:
        return self is not SketchKind.GAUSSIAN


class Probabilities(NamedTuple):
    """A probability vector and whether it fell back to uniform."""

    values: npt.NDArray[np.float64]
    uniform_fallback: bool


@dataclass(frozen=True, eq=False)
class SketchSpec:
    """Description of a sketching matrix S ∈ ℝ^{n×d}.

    Attributes:
        kind: Sketch family
        width: Number of columns d
        seed: Seed of the draw
        probs: Sampling probabilities, required for sub-sampling kinds
        size: Number of rows n, required for the Gaussian kind
    """

    kind: SketchKind
    width: int
    seed: RngSeed = RngSeed()
    probs: npt.NDArray[np.float64] | None = None
    size: int | None = None

    def __post_init__(self):
        kind = SketchKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.width < 1:
            raise InvalidArgumentError(f"sketch width must be >= 1, got {self.width}")

        if not kind.is_subsample:
            if self.size is None or self.size < 1:
                raise InvalidArgumentError("a gaussian sketch needs size >= 1")
            return

        if self.probs is None:
            raise InvalidArgumentError(f"{kind.value} sketch needs probabilities")
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidArgumentError("probabilities must be a non-empty vector")
        if self.size is not None and self.size != probs.size:
            raise InvalidArgumentError(
                f"size {self.size} disagrees with {probs.size} probabilities"
            )
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise InvalidArgumentError("probabilities must be finite and >= 0")
        if abs(probs.sum() - 1.0) > PROB_TOLERANCE:
            raise InvalidArgumentError(
                f"probabilities must sum to 1, got {probs.sum()!r}"
            )
        positive = int(np.count_nonzero(probs))
        if kind is SketchKind.SUBSAMPLE_WITHOUT_REPLACEMENT and positive < self.width:
            raise InvalidArgumentError(
                f"cannot draw {self.width} indices without replacement from "
                f"{positive} positive probabilities"
            )
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "size", probs.size)

    @property
    def n(self) -> int:
        return self.size


@dataclass(frozen=True, eq=False)
class SubsampleDraw:
    """Indices of a sub-sampling draw and the scale of each sampled column."""

    indices: npt.NDArray[np.intp]
    scale: npt.NDArray[np.float64]


def weighted_sample_without_replacement(
    probs: npt.NDArray[np.float64], count: int, rng: np.random.Generator
) -> npt.NDArray[np.intp]:
    """Draw ``count`` distinct indices by an exponential race.

    Every positive-probability index i gets the key E_i / p_i with E_i ~ Exp(1);
    the ``count`` smallest keys win. The result is distributed as successive
    draws proportional to the remaining weights. Zero-probability indices never
    take part.
    """
    candidates = np.flatnonzero(probs > 0)
    keys = rng.standard_exponential(candidates.size) / probs[candidates]
    order = np.argsort(keys, kind="stable")
    return candidates[order[:count]]


def draw_subsample(spec: SketchSpec) -> SubsampleDraw:
    """Draw the column indices of a sub-sampling sketch.

    With replacement the indices are i.i.d. from ``spec.probs`` and column k is
    scaled by 1/√(d·p_k). Without replacement no scaling is applied (scale 1).

    Raises:
        InvalidArgumentError: If the spec is not a sub-sampling kind
    """
    if not spec.kind.is_subsample:
        raise InvalidArgumentError(f"{spec.kind.value} is not a sub-sampling kind")

    rng = spec.seed.generator()
    d = spec.width
    if spec.kind is SketchKind.SUBSAMPLE_WITH_REPLACEMENT:
        indices = rng.choice(spec.n, size=d, p=spec.probs)
        scale = 1.0 / np.sqrt(d * spec.probs[indices])
    else:
        indices = weighted_sample_without_replacement(spec.probs, d, rng)
        scale = np.ones(d)
    return SubsampleDraw(indices=indices.astype(np.intp), scale=scale)


def materialize_sketch(spec: SketchSpec) -> DenseMatrix:
    """Build the dense n×d sketching matrix described by ``spec``."""
    if spec.kind is SketchKind.GAUSSIAN:
        rng = spec.seed.generator()
        return as_matrix(
            rng.normal(0.0, 1.0 / math.sqrt(spec.width), size=(spec.n, spec.width))
        )

    draw = draw_subsample(spec)
    sketch = np.zeros((spec.n, spec.width))
    sketch[draw.indices, np.arange(spec.width)] = draw.scale
    return as_matrix(sketch)


def normalize_weights(
    weights: npt.NDArray[np.float64], unpadded_len: int, source: str
) -> Probabilities:
    """Normalize nonnegative weights over the first ``unpadded_len`` entries.

    Padded entries get probability 0. When every unpadded weight is 0 the
    result is uniform over the unpadded range and flagged.
    """
    probs = np.zeros_like(weights)
    total = weights[:unpadded_len].sum()
    if total > 0:
        probs[:unpadded_len] = weights[:unpadded_len] / total
        return Probabilities(probs, False)

    sentry_sdk.add_breadcrumb(
        category="sketch",
        message=f"{source}: all weights zero, falling back to uniform",
        level="info",
    )
    probs[:unpadded_len] = 1.0 / unpadded_len
    return Probabilities(probs, True)


def optimal_subsample_probs(
    b: DenseMatrix, v: DenseMatrix, unpadded_len: int | None = None
) -> Probabilities:
    """Norm-product probabilities p_i ∝ ‖B^{(i)}‖‖V_{(i)}‖ (the β = 1 optimum).

    Needs the full n×n score matrix, so it is meant for verifiers and small
    oracle instances only.
    """
    n = b.shape[1]
    if b.shape[0] != n or v.shape[0] != n:
        raise InvalidArgumentError(
            f"shape mismatch: B is {b.shape}, V is {v.shape}"
        )
    m = n if unpadded_len is None else unpadded_len
    weights = np.linalg.norm(b, axis=0) * np.linalg.norm(v, axis=1)
    return normalize_weights(weights, m, "optimal_subsample_probs")


def jl_distortion_check(
    n: int,
    d: int,
    epsilon: float,
    trials: int,
    seed: RngSeed,
    sketch: DenseMatrix | None = None,
) -> float:
    """Empirical failure rate of the oblivious JL guarantee.

    Each trial draws a Gaussian S ∈ ℝ^{n×d} and a random unit vector b and
    counts a failure when |‖Sᵀb‖² − ‖b‖²| > ε‖b‖².
    Passing ``sketch`` fixes S for every trial.
    """
    if n < 1 or d < 1 or trials < 1:
        raise InvalidArgumentError(
            f"n, d and trials must be >= 1, got n={n}, d={d}, trials={trials}"
        )
    if not 0 < epsilon < 0.5:
        raise InvalidArgumentError(f"epsilon must be in (0, 1/2), got {epsilon}")
    if sketch is not None and sketch.shape != (n, d):
        raise InvalidArgumentError(f"sketch must be {n}x{d}, got {sketch.shape}")

    failures = 0
    for t in range(trials):
        trial_seed = seed.for_trial(t)
        s = sketch
        if s is None:
            s = materialize_sketch(
                SketchSpec(SketchKind.GAUSSIAN, d, trial_seed.substream(0), size=n)
            )
        b = trial_seed.substream(1).generator().normal(size=n)
        b /= np.linalg.norm(b)
        if abs(float(np.sum((s.T @ b) ** 2)) - 1.0) > epsilon:
            failures += 1
    return failures / trials
