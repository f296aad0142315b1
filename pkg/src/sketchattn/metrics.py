# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Error norms, FLOPs accounting and statistical verifiers of the error bounds."""

import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import sentry_sdk

from .config import DEFAULT_ORACLE_CAP
from .core import AttentionInput, DenseMatrix, RngSeed, random_attention_input
from .errors import InvalidArgumentError
from .oracle import score_matrices
from .skein import estimate_probs, pilot_sample, pilot_scores
from .sketch import (
    SketchKind,
    SketchSpec,
    draw_subsample,
    jl_distortion_check,
    materialize_sketch,
    optimal_subsample_probs,
)
from .trials import map_trials

SPECTRAL_TOL = 1e-8
SPECTRAL_MAX_ITER = 10_000
UNBIASED_TOLERANCE_SE = 5.0

InputFactory = Callable[[RngSeed], AttentionInput]


class PowerIteration(NamedTuple):
    """Outcome of a power iteration."""

    value: float
    iterations: int
    converged: bool


def power_iteration(
    matrix: DenseMatrix,
    tol: float = SPECTRAL_TOL,
    max_iter: int = SPECTRAL_MAX_ITER,
    seed: RngSeed | None = None,
) -> PowerIteration:
    """Largest singular value of ``matrix`` by power iteration on its Gram matrix.

    Iterates on the smaller of MᵀM and MMᵀ from a seeded random start and stops
    once the eigen-residual ‖Gx − λx‖ is at most tol·λ.
    """
    if not tol > 0:
        raise InvalidArgumentError(f"tol must be > 0, got {tol}")
    if max_iter < 1:
        raise InvalidArgumentError(f"max_iter must be >= 1, got {max_iter}")
    m = np.asarray(matrix, dtype=np.float64)
    if not np.any(m):
        return PowerIteration(0.0, 0, True)

    gram = m.T @ m if m.shape[0] >= m.shape[1] else m @ m.T
    rng = (seed or RngSeed()).generator()
    x = rng.normal(size=gram.shape[0])
    x /= np.linalg.norm(x)

    lam = 0.0
    for iteration in range(1, max_iter + 1):
        y = gram @ x
        lam = float(x @ y)
        if np.linalg.norm(y - lam * x) <= tol * lam:
            return PowerIteration(math.sqrt(lam), iteration, True)
        y_norm = np.linalg.norm(y)
        if y_norm == 0:
            # Start landed in the null space.
            x = rng.normal(size=gram.shape[0])
            x /= np.linalg.norm(x)
            continue
        x = y / y_norm

    sentry_sdk.add_breadcrumb(
        category="metrics",
        message=f"power iteration stopped at max_iter={max_iter} before tol={tol}",
        level="warning",
    )
    return PowerIteration(math.sqrt(max(lam, 0.0)), max_iter, False)


def spectral_norm(
    matrix: DenseMatrix,
    tol: float = SPECTRAL_TOL,
    max_iter: int = SPECTRAL_MAX_ITER,
    seed: RngSeed | None = None,
) -> float:
    """Spectral norm ‖M‖₂; see :func:`power_iteration`."""
    return power_iteration(matrix, tol, max_iter, seed).value


@dataclass(frozen=True)
class ErrorReport:
    """Losses of an approximation against the exact output."""

    spectral_loss: float
    frobenius_loss: float
    relative_spectral: float
    relative_frobenius: float


def _relative(loss: float, reference: float) -> float:
    if reference > 0:
        return loss / reference
    return 0.0 if loss == 0 else math.inf


def error_report(
    r_exact: DenseMatrix,
    r_approx: DenseMatrix,
    unpadded_len: int | None = None,
    seed: RngSeed | None = None,
) -> ErrorReport:
    """Spectral and Frobenius losses over the unpadded rows.

    Raises:
        InvalidArgumentError: On shape mismatch
    """
    if r_exact.shape != r_approx.shape:
        raise InvalidArgumentError(
            f"shape mismatch: {r_exact.shape} vs {r_approx.shape}"
        )
    m = r_exact.shape[0] if unpadded_len is None else unpadded_len
    exact = np.asarray(r_exact[:m], dtype=np.float64)
    diff = exact - r_approx[:m]

    spectral_loss = spectral_norm(diff, seed=seed)
    frobenius_loss = float(np.linalg.norm(diff))
    return ErrorReport(
        spectral_loss=spectral_loss,
        frobenius_loss=frobenius_loss,
        relative_spectral=_relative(spectral_loss, spectral_norm(exact, seed=seed)),
        relative_frobenius=_relative(frobenius_loss, float(np.linalg.norm(exact))),
    )


FLOPS_FORMULAS: dict[str, tuple[str, Callable[[int, int, int], int]]] = {
    "standard": ("2n²p", lambda n, p, d: 2 * n * n * p),
    "linformer": ("4ndp", lambda n, p, d: 4 * n * d * p),
    "informer": ("3ndp", lambda n, p, d: 3 * n * d * p),
    "skeinformer": ("4ndp", lambda n, p, d: 4 * n * d * p),
    # Not from the published table: one pass over V.
    "vmean": ("np", lambda n, p, d: n * p),
}


def flops_estimate(method: str, n: int, p: int, d: int) -> int:
    """Leading FLOPs term of computing attention with ``method``.

    Raises:
        InvalidArgumentError: If the method is unknown
    """
    try:
        _, formula = FLOPS_FORMULAS[method]
    except KeyError as e:
        raise InvalidArgumentError(
            f"unknown method {method!r}; expected one of {', '.join(FLOPS_FORMULAS)}"
        ) from e
    return formula(n, p, d)


@dataclass(frozen=True)
class BoundParams:
    """Constants of the Frobenius-norm sampling guarantee.

    Attributes:
        beta: Quality coefficient in (0, 1]
        delta: Failure probability in (0, 1)
        c: Lower bound of ‖B^{(i)}‖²/n over columns, when known
    """

    beta: float
    delta: float
    c: float | None = None

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise InvalidArgumentError(f"beta must be in (0, 1], got {self.beta}")
        if not 0 < self.delta < 1:
            raise InvalidArgumentError(f"delta must be in (0, 1), got {self.delta}")
        if self.c is not None and not self.c > 0:
            raise InvalidArgumentError(f"C must be > 0, got {self.c}")

    @property
    def eta(self) -> float:
        return 1.0 + math.sqrt((8.0 / self.beta) * math.log(1.0 / self.delta))

    def frobenius_bound(self, d: int, b_norm_sq: float, v_norm_sq: float) -> float:
        """Right-hand side η²/(βd)·‖B‖_F²·‖V‖_F²."""
        return self.eta**2 / (self.beta * d) * b_norm_sq * v_norm_sq


def binomial_tolerance(rate: float, trials: int, k: float = 3.0) -> float:
    """``rate`` plus ``k`` binomial standard errors over ``trials``."""
    return rate + k * math.sqrt(rate * (1.0 - rate) / trials)


def quality_coefficient(probs: np.ndarray, b: DenseMatrix, v: DenseMatrix) -> float:
    """Largest β with p_i >= β·‖B^{(i)}‖‖V_{(i)}‖ / Σ‖B‖‖V‖ for every i."""
    weights = np.linalg.norm(b, axis=0) * np.linalg.norm(v, axis=1)
    total = weights.sum()
    positive = weights > 0
    if total == 0 or not np.any(positive):
        return 1.0
    ratios = probs[positive] * total / weights[positive]
    return float(min(1.0, ratios.min()))


def _check_trial_args(n: int, p: int, trials: int, min_trials: int = 1) -> None:
    if n < 1 or p < 1:
        raise InvalidArgumentError(f"n and p must be >= 1, got n={n}, p={p}")
    if trials < min_trials:
        raise InvalidArgumentError(f"trials must be >= {min_trials}, got {trials}")


@dataclass(frozen=True)
class Prop1Summary:
    """Result of :func:`verify_prop1`."""

    violation_rate: float
    tolerance: float
    trials: int
    seed: int
    d: int
    mean_sq_error: float
    sq_error_se: float
    mean_bound: float
    min_beta: float

    @property
    def passed(self) -> bool:
        return self.violation_rate <= self.tolerance


def verify_prop1(
    n: int,
    p: int,
    d: int,
    delta: float,
    trials: int,
    seed: RngSeed,
    flatten: float = 0.0,
    stdev: float = 1.0,
    cap: int = DEFAULT_ORACLE_CAP,
    workers: int = 1,
    input_factory: InputFactory | None = None,
) -> Prop1Summary:
    """Check ‖BV − BSSᵀV‖_F² <= η²/(βd)·‖B‖_F²‖V‖_F² by simulation.

    Each trial samples inputs, computes B exactly, mixes the optimal
    probabilities with the uniform vector (weight ``flatten``; 0 keeps β = 1),
    measures the exact β of the result, draws a with-replacement
    sub-sampling sketch and tests the inequality.
    """
    _check_trial_args(n, p, trials, min_trials=100)
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    if not 0 < delta < 1:
        raise InvalidArgumentError(f"delta must be in (0, 1), got {delta}")
    if not 0 <= flatten < 1:
        raise InvalidArgumentError(f"flatten must be in [0, 1), got {flatten}")

    def trial(t: int) -> tuple[float, float, float]:
        trial_seed = seed.for_trial(t)
        if input_factory is not None:
            inp = input_factory(trial_seed)
        else:
            inp = random_attention_input(n, p, stdev, trial_seed.substream(0))
        b, v = score_matrices(inp, cap=cap).b, inp.v

        optimal = optimal_subsample_probs(b, v).values
        probs = (1.0 - flatten) * optimal + flatten / inp.n
        beta = quality_coefficient(probs, b, v)

        draw = draw_subsample(
            SketchSpec(
                SketchKind.SUBSAMPLE_WITH_REPLACEMENT,
                d,
                trial_seed.substream(1),
                probs=probs,
            )
        )
        sketched_b = b[:, draw.indices] * draw.scale
        sketched_v = v[draw.indices] * draw.scale[:, None]
        sq_error = float(np.sum((b @ v - sketched_b @ sketched_v) ** 2))
        bound = BoundParams(beta, delta).frobenius_bound(
            d, float(np.sum(b**2)), float(np.sum(v**2))
        )
        return sq_error, bound, beta

    results = np.array(map_trials(trial, trials, workers))
    sq_errors, bounds, betas = results[:, 0], results[:, 1], results[:, 2]
    violation_rate = float(np.mean(sq_errors > bounds))
    return Prop1Summary(
        violation_rate=violation_rate,
        tolerance=binomial_tolerance(delta, trials),
        trials=trials,
        seed=seed.master_seed,
        d=d,
        mean_sq_error=float(sq_errors.mean()),
        sq_error_se=float(sq_errors.std(ddof=1) / math.sqrt(trials)),
        mean_bound=float(bounds.mean()),
        min_beta=float(betas.min()),
    )


@dataclass(frozen=True)
class Lemma1Summary:
    """Result of :func:`verify_lemma1`.

    Trials whose required pilot size reached the unpadded length m ran with
    every unpadded row as the pilot, which makes the estimate exact. They are
    counted in ``capped_trials`` and ``capped_failure_rate`` is the failure rate
    among them (0 when there were none). ``uncapped_failure_rate`` covers the
    remaining trials; ``passed`` is judged on those alone, and holds vacuously
    when every trial was capped.
    """

    failure_rate: float
    tolerance: float
    trials: int
    seed: int
    mean_pilot_size: float
    max_required_pilot: float
    capped_trials: int
    capped_failure_rate: float
    uncapped_failure_rate: float

    @property
    def passed(self) -> bool:
        return self.uncapped_failure_rate <= self.tolerance


LEMMA1_BETA = math.sqrt(1.0 / 3.0)


def required_pilot_size(c: float, n: int, delta: float) -> float:
    """Pilot size ⌈(2/C²)·ln(2n/δ)⌉ of the probability-estimate guarantee."""
    if not c > 0:
        return math.inf
    return float(math.ceil((2.0 / c**2) * math.log(2.0 * n / delta)))


def verify_lemma1(
    n: int,
    p: int,
    delta: float,
    trials: int,
    seed: RngSeed,
    stdev: float = 1.0,
    cap: int = DEFAULT_ORACLE_CAP,
    workers: int = 1,
    input_factory: InputFactory | None = None,
) -> Lemma1Summary:
    """Check that pilot-estimated probabilities satisfy p̂_i >= √(1/3)·p_i.

    Per trial C = min_i ‖B^{(i)}‖²/n is measured on the realized B and the pilot
    size is set to ⌈(2/C²)·ln(2n/δ)⌉. Once that reaches m the pilot is every
    unpadded row.
    """
    _check_trial_args(n, p, trials)
    if not 0 < delta < 0.5:
        raise InvalidArgumentError(f"delta must be in (0, 1/2), got {delta}")

    def trial(t: int) -> tuple[bool, int, float, bool]:
        trial_seed = seed.for_trial(t)
        if input_factory is not None:
            inp = input_factory(trial_seed)
        else:
            inp = random_attention_input(n, p, stdev, trial_seed.substream(0))
        b = score_matrices(inp, cap=cap).b

        c = float(np.min(np.sum(b[:, : inp.m] ** 2, axis=0))) / inp.n
        required = required_pilot_size(c, inp.n, delta)
        capped = required >= inp.m
        if capped:
            j = np.arange(inp.m, dtype=np.intp)
        else:
            j = pilot_sample(inp.m, int(required), trial_seed.substream(1))
        pilot = j.size


        p_hat = estimate_probs(pilot_scores(inp, j), inp.v, inp.m).values
        optimal = optimal_subsample_probs(b, inp.v, inp.m).values
        failed = bool(np.any(p_hat[: inp.m] < LEMMA1_BETA * optimal[: inp.m]))
        return failed, pilot, required, capped

    results = map_trials(trial, trials, workers)
    failed = np.array([r[0] for r in results])
    pilots = np.array([r[1] for r in results], dtype=np.float64)
    required = np.array([r[2] for r in results])
    capped = np.array([r[3] for r in results])

    return Lemma1Summary(
        failure_rate=float(failed.mean()),
        tolerance=binomial_tolerance(delta, trials),
        trials=trials,
        seed=seed.master_seed,
        mean_pilot_size=float(pilots.mean()),
        max_required_pilot=float(required.max()),
        capped_trials=int(capped.sum()),
        capped_failure_rate=float(failed[capped].mean()) if capped.any() else 0.0,
        uncapped_failure_rate=(
            float(failed[~capped].mean()) if not capped.all() else 0.0
        ),
    )


@dataclass(frozen=True)
class UnbiasednessSummary:
    """Result of :func:`verify_sketch_unbiased`."""

    kind: SketchKind
    max_deviation_se: float
    tolerance: float
    trials: int
    seed: int

    @property
    def passed(self) -> bool:
        return self.max_deviation_se <= self.tolerance


def verify_sketch_unbiased(
    kind: SketchKind,
    n: int,
    d: int,
    trials: int,
    seed: RngSeed,
    workers: int = 1,
) -> UnbiasednessSummary:
    """Monte Carlo check of E[SSᵀ] = I, entrywise in standard-error units.

    Sub-sampling kinds use uniform probabilities. Entries whose sample
    variance is 0 must match I exactly (within 1e-12).
    """
    kind = SketchKind(kind)
    if kind is SketchKind.SUBSAMPLE_WITHOUT_REPLACEMENT:
        raise InvalidArgumentError("E[SSᵀ] = I only holds for with-replacement draws")
    if n < 1 or d < 1:
        raise InvalidArgumentError(f"n and d must be >= 1, got n={n}, d={d}")
    if trials < 2:
        raise InvalidArgumentError(f"trials must be >= 2, got {trials}")
    uniform = np.full(n, 1.0 / n)

    chunks = max(1, workers) * 4
    bounds = np.linspace(0, trials, chunks + 1).astype(int)

    def chunk(c: int) -> tuple[np.ndarray, np.ndarray]:
        first = np.zeros((n, n))
        second = np.zeros((n, n))
        for t in range(bounds[c], bounds[c + 1]):
            s = materialize_sketch(
                SketchSpec(
                    kind,
                    d,
                    seed.for_trial(t),
                    probs=None if kind is SketchKind.GAUSSIAN else uniform,
                    size=n,
                )
            )
            outer = s @ s.T
            first += outer
            second += outer**2
        return first, second

    partials = map_trials(chunk, chunks, workers)
    mean = sum(part[0] for part in partials) / trials
    variance = np.maximum(sum(part[1] for part in partials) / trials - mean**2, 0.0)
    stderr = np.sqrt(variance / trials)
    deviation = np.abs(mean - np.eye(n))

    with np.errstate(divide="ignore", invalid="ignore"):
        exact_miss = np.where(deviation > 1e-12, np.inf, 0.0)
        z = np.where(stderr > 0, deviation / stderr, exact_miss)
    return UnbiasednessSummary(
        kind=kind,
        max_deviation_se=float(z.max()),
        tolerance=UNBIASED_TOLERANCE_SE,
        trials=trials,
        seed=seed.master_seed,
    )


@dataclass(frozen=True)
class JLSummary:
    """Result of :func:`verify_jl`."""

    failure_rate: float
    tolerance: float
    trials: int
    seed: int

    @property
    def passed(self) -> bool:
        return self.failure_rate <= self.tolerance


def verify_jl(
    n: int, d: int, epsilon: float, delta: float, trials: int, seed: RngSeed
) -> JLSummary:
    """Failure rate of the JL guarantee against δ plus three standard errors."""
    if not 0 < delta < 1:
        raise InvalidArgumentError(f"delta must be in (0, 1), got {delta}")
    rate = jl_distortion_check(n, d, epsilon, trials, seed)
    return JLSummary(
        failure_rate=rate,
        tolerance=binomial_tolerance(delta, trials),
        trials=trials,
        seed=seed.master_seed,
    )
