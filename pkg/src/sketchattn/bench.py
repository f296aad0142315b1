# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Error sweeps and the linear-time certificate behind ``bench`` and ``scaling``."""

import csv
import math
import sys
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import NamedTuple, TextIO

import numpy as np

from .baselines import (
    informer_attention,
    linformer_attention,
    linformer_unreduced,
    vmean_attention,
)
from .config import DEFAULT_ORACLE_CAP
from .core import AttentionInput, DenseMatrix, RngSeed, random_attention_input
from .errors import InvalidArgumentError, ResourceLimitError, SanityCheckError
from .metrics import ErrorReport, error_report
from .oracle import exact_attention
from .skein import RowNorm, Sampling, SkeinConfig, skein_attention
from .trials import gather_trials

RELATIVE_SPECTRAL_CEILING = 10.0
# Gaussian-sketch Linformer losses grow like ‖V‖_F/√d, far above the ceiling
# at small d.
CEILING_EXEMPT = frozenset({"linformer", "linformer_unreduced"})
DEFAULT_D_VALUES = (8, 16, 32, 64, 128, 256)
DEFAULT_METHODS = ("skeinformer", "informer", "linformer", "vmean")

CSV_COLUMNS = (
    "method",
    "n",
    "p",
    "d",
    "trial",
    "seed",
    "spectral_loss",
    "frobenius_loss",
    "relative_spectral",
    "relative_frobenius",
    "elapsed_ns",
    "score_entries_computed",
    "spectral_se",
    "frobenius_se",
    "relative_spectral_se",
    "relative_frobenius_se",
)


class MethodResult(NamedTuple):
    """Output of a registered method and the score entries it computed."""

    output: DenseMatrix
    score_entries: int


Method = Callable[[AttentionInput, int, RngSeed, int], MethodResult]


def _exact(inp: AttentionInput, d: int, seed: RngSeed, cap: int) -> MethodResult:
    if inp.n > cap:
        raise ResourceLimitError(f"n={inp.n} exceeds the oracle cap {cap}")
    return MethodResult(exact_attention(inp), inp.n * inp.n)


def _vmean(inp: AttentionInput, d: int, seed: RngSeed, cap: int) -> MethodResult:
    return MethodResult(vmean_attention(inp), 0)


def _linformer(inp: AttentionInput, d: int, seed: RngSeed, cap: int) -> MethodResult:
    return MethodResult(linformer_attention(inp, d, seed), inp.n * d)


def _linformer_unreduced(
    inp: AttentionInput, d: int, seed: RngSeed, cap: int
) -> MethodResult:
    return MethodResult(linformer_unreduced(inp, d, seed, cap=cap), inp.n * inp.n)


def _informer(inp: AttentionInput, d: int, seed: RngSeed, cap: int) -> MethodResult:
    entries = inp.n * inp.n if d >= inp.m else 2 * inp.n * d
    return MethodResult(informer_attention(inp, d, seed), entries)


def _skein(**options) -> Method:
    def run(inp: AttentionInput, d: int, seed: RngSeed, cap: int) -> MethodResult:
        output, trace = skein_attention(inp, SkeinConfig(d, seed=seed, **options))
        return MethodResult(output, trace.score_entries)

    return run


METHODS: dict[str, Method] = {
    "exact": _exact,
    "vmean": _vmean,
    "linformer": _linformer,
    "linformer_unreduced": _linformer_unreduced,
    "informer": _informer,
    "skeinformer": _skein(),
    "skeinformer_uniform": _skein(sampling=Sampling.UNIFORM),
    "skeinformer_no_rownorm": _skein(row_norm=RowNorm.OFF),
    "skeinformer_simple_rownorm": _skein(row_norm=RowNorm.SIMPLE),
    "skeinformer_no_reuse": _skein(reuse_pilot=False),
}


def run_method(
    name: str,
    inp: AttentionInput,
    d: int,
    seed: RngSeed,
    cap: int = DEFAULT_ORACLE_CAP,
) -> MethodResult:
    """Run the registered method ``name``.

    Raises:
        InvalidArgumentError: If the method is unknown
    """
    try:
        method = METHODS[name]
    except KeyError as e:
        raise InvalidArgumentError(
            f"unknown method {name!r}; expected one of {', '.join(METHODS)}"
        ) from e
    return method(inp, d, seed, cap)


@dataclass(frozen=True)
class SweepConfig:
    """Settings of an error sweep.

    Attributes:
        n: Sequence length
        p: Head dimension
        d_values: Sub-sample sizes, each in [1, n]
        methods: Registered method names
        trials: Number of trials
        stdev: Standard deviation of the Gaussian inputs
        seed: Master seed; trial t uses ``seed.for_trial(t)``
        output_path: Destination of the CSV, ``-`` for standard output
        unpadded_len: Unpadded length of every generated input
        oracle_cap: Largest n the quadratic methods accept
        workers: Concurrent trials
        deterministic: Zero the timings and omit the timestamp line
    """

    n: int
    p: int
    d_values: tuple[int, ...] = DEFAULT_D_VALUES
    methods: tuple[str, ...] = DEFAULT_METHODS
    trials: int = 64
    stdev: float = 1.0
    seed: RngSeed = field(default_factory=RngSeed)
    output_path: str = "-"
    unpadded_len: int | None = None
    oracle_cap: int = DEFAULT_ORACLE_CAP
    workers: int = 1
    deterministic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "d_values", tuple(self.d_values))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.n < 1 or self.p < 1:
            raise InvalidArgumentError(
                f"n and p must be >= 1, got n={self.n}, p={self.p}"
            )
        if not self.d_values:
            raise InvalidArgumentError("at least one d value is required")
        for d in self.d_values:
            if not 1 <= d <= self.n:
                raise InvalidArgumentError(f"d must be in [1, {self.n}], got {d}")
        if not self.methods:
            raise InvalidArgumentError("at least one method is required")
        unknown = [name for name in self.methods if name not in METHODS]
        if unknown:
            raise InvalidArgumentError(
                f"unknown method(s) {', '.join(unknown)}; "
                f"expected one of {', '.join(METHODS)}"
            )
        if self.trials < 1:
            raise InvalidArgumentError(f"trials must be >= 1, got {self.trials}")
        if not self.stdev > 0:
            raise InvalidArgumentError(f"stdev must be > 0, got {self.stdev}")
        if self.n > self.oracle_cap:
            raise ResourceLimitError(
                f"n={self.n} exceeds the oracle cap {self.oracle_cap}"
            )


@dataclass(frozen=True)
class BenchRow:
    """One CSV row; aggregate rows have ``trial == -1`` and carry the SEs."""

    method: str
    n: int
    p: int
    d: int
    trial: int
    seed: int
    report: ErrorReport
    elapsed_ns: int
    score_entries: int
    standard_errors: ErrorReport | None = None

    def as_csv(self) -> list[str]:
        fields = [
            self.method,
            str(self.n),
            str(self.p),
            str(self.d),
            str(self.trial),
            str(self.seed),
            repr(self.report.spectral_loss),
            repr(self.report.frobenius_loss),
            repr(self.report.relative_spectral),
            repr(self.report.relative_frobenius),
            str(self.elapsed_ns),
            str(self.score_entries),
        ]
        se = self.standard_errors
        if se is None:
            return fields + [""] * 4
        return fields + [
            repr(se.spectral_loss),
            repr(se.frobenius_loss),
            repr(se.relative_spectral),
            repr(se.relative_frobenius),
        ]


def _mean_and_se(values: Sequence[float]) -> tuple[float, float]:
    data = np.asarray(values, dtype=np.float64)
    if data.size < 2:
        return float(data.mean()), 0.0
    return float(data.mean()), float(data.std(ddof=1) / math.sqrt(data.size))


def aggregate(rows: Sequence[BenchRow], seed: int) -> BenchRow:
    """Mean and standard error of the data rows of one (method, d) group."""
    first = rows[0]
    means, errors = {}, {}
    for name in ErrorReport.__dataclass_fields__:
        means[name], errors[name] = _mean_and_se(
            [getattr(row.report, name) for row in rows]
        )
    return BenchRow(
        method=first.method,
        n=first.n,
        p=first.p,
        d=first.d,
        trial=-1,
        seed=seed,
        report=ErrorReport(**means),
        elapsed_ns=round(np.mean([row.elapsed_ns for row in rows])),
        score_entries=round(np.mean([row.score_entries for row in rows])),
        standard_errors=ErrorReport(**errors),
    )


class BenchRunner:
    """Runs an error sweep, trials concurrently, rows in (method, d, trial) order."""

    def __init__(self, config: SweepConfig):
        """Initialize the runner.

        Args:
            config: Sweep settings
        """
        self.config = config

    def run_trial(self, trial: int) -> list[BenchRow]:
        """Evaluate every (method, d) pair on the input of one trial."""
        cfg = self.config
        trial_seed = cfg.seed.for_trial(trial)
        inp = random_attention_input(
            cfg.n, cfg.p, cfg.stdev, trial_seed.substream(0), cfg.unpadded_len
        )
        reference = exact_attention(inp)

        rows = []
        for method in cfg.methods:
            for d in cfg.d_values:
                method_seed = trial_seed.substream(1).substream(d)
                start = time.perf_counter_ns()
                result = run_method(method, inp, d, method_seed, cfg.oracle_cap)
                elapsed = time.perf_counter_ns() - start
                report = error_report(
                    reference, result.output, inp.m, trial_seed.substream(2)
                )
                rows.append(
                    BenchRow(
                        method=method,
                        n=cfg.n,
                        p=cfg.p,
                        d=d,
                        trial=trial,
                        seed=trial_seed.master_seed,
                        report=report,
                        elapsed_ns=0 if cfg.deterministic else elapsed,
                        score_entries=result.score_entries,
                    )
                )
        print(f"✓ Trial {trial + 1}/{cfg.trials}", file=sys.stderr)
        return rows

    async def run(self) -> list[BenchRow]:
        """Run all trials and return data and aggregate rows.

        The rows are not checked against the ceiling here; see
        :func:`ceiling_violations`.
        """
        cfg = self.config
        print(
            f"Running sweep: n={cfg.n}, p={cfg.p}, {len(cfg.methods)} method(s), "
            f"{len(cfg.d_values)} d value(s), {cfg.trials} trial(s)",
            file=sys.stderr,
        )
        per_trial = await gather_trials(self.run_trial, cfg.trials, cfg.workers)

        rows: list[BenchRow] = []
        for method in cfg.methods:
            for d in cfg.d_values:
                group = [
                    row
                    for trial_rows in per_trial
                    for row in trial_rows
                    if row.method == method and row.d == d
                ]
                rows.extend(group)
                rows.append(aggregate(group, cfg.seed.master_seed))
        return rows


def ceiling_violations(rows: Sequence[BenchRow]) -> list[str]:
    """Describe every data row whose relative spectral loss exceeds the ceiling.

    Methods in :data:`CEILING_EXEMPT` are not checked. A NaN loss counts as a
    violation.
    """
    return [
        f"{row.method} d={row.d} trial={row.trial}: relative spectral loss "
        f"{row.report.relative_spectral} exceeds {RELATIVE_SPECTRAL_CEILING}"
        for row in rows
        if row.trial >= 0
        and row.method not in CEILING_EXEMPT
        and not row.report.relative_spectral <= RELATIVE_SPECTRAL_CEILING
    ]


def write_csv(rows: Sequence[BenchRow], stream: TextIO, deterministic: bool) -> None:
    """Write sweep rows as CSV, after a timestamp comment unless deterministic."""
    if not deterministic:
        stream.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv())


SCALING_TOLERANCE = 0.25


@dataclass(frozen=True)
class ScalingPoint:
    """Timings at one n; ``exact_ns`` is None above the oracle cap.

    ``deviation`` is the relative distance of ``skein_ns`` from the fitted
    a·n·d.
    """

    n: int
    d: int
    skein_ns: int
    exact_ns: int | None
    score_entries: int
    deviation: float = 0.0


@dataclass(frozen=True)
class ScalingReport:
    """Linear-fit certificate t = a·n·d of the Skeinformer timings."""

    points: list[ScalingPoint]
    slope: float

    @property
    def max_deviation(self) -> float:
        return max(point.deviation for point in self.points)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= SCALING_TOLERANCE


def scaling_d(n: int, d_factor: int) -> int:
    """Sub-sample size ⌈log₂ n⌉·d_factor."""
    return math.ceil(math.log2(n)) * d_factor


def _best_time(fn: Callable[[], object], repeats: int) -> int:
    best = None
    for _ in range(repeats):
        start = time.perf_counter_ns()
        fn()
        elapsed = time.perf_counter_ns() - start
        best = elapsed if best is None else min(best, elapsed)
    return best


def run_scaling(
    n_values: Sequence[int],
    p: int,
    seed: RngSeed,
    d_factor: int = 8,
    repeats: int = 3,
    stdev: float = 1.0,
    oracle_cap: int = DEFAULT_ORACLE_CAP,
) -> ScalingReport:
    """Time Skeinformer over ``n_values`` and fit t = a·n·d through the origin.

    Raises:
        InvalidArgumentError: If an n is too small for its d
        SanityCheckError: If a call computed other than 2·d·n score entries
    """
    if not n_values:
        raise InvalidArgumentError("at least one n is required")
    if p < 1 or d_factor < 1 or repeats < 1:
        raise InvalidArgumentError("p, d_factor and repeats must be >= 1")

    measured = []
    for n in n_values:
        if n < 2:
            raise InvalidArgumentError(f"n must be >= 2, got {n}")
        d = scaling_d(n, d_factor)
        if d >= n:
            raise InvalidArgumentError(f"d={d} is not below n={n}")
        inp = random_attention_input(n, p, stdev, seed.substream(n))
        cfg = SkeinConfig(d, seed=seed.substream(n).substream(3))

        _, trace = skein_attention(inp, cfg)
        if trace.score_entries != 2 * d * n:
            raise SanityCheckError(
                f"n={n}: {trace.score_entries} score entries, expected {2 * d * n}"
            )
        skein_ns = _best_time(lambda: skein_attention(inp, cfg), repeats)  # noqa: B023
        exact_ns = None
        if n <= oracle_cap:
            exact_ns = _best_time(lambda: exact_attention(inp), repeats)  # noqa: B023
        print(f"✓ n={n} d={d}: {skein_ns} ns", file=sys.stderr)
        measured.append((n, d, skein_ns, exact_ns, trace.score_entries))

    x = np.array([n * d for n, d, *_ in measured], dtype=np.float64)
    t = np.array([m[2] for m in measured], dtype=np.float64)
    slope = float(x @ t / (x @ x))
    points = [
        ScalingPoint(
            n=n,
            d=d,
            skein_ns=skein_ns,
            exact_ns=exact_ns,
            score_entries=entries,
            deviation=abs(skein_ns - slope * n * d) / (slope * n * d),
        )
        for n, d, skein_ns, exact_ns, entries in measured
    ]
    return ScalingReport(points=points, slope=slope)
