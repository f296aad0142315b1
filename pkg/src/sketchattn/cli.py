# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Command-line interface for sketchattn."""

import argparse
import asyncio
import sys
from contextlib import nullcontext

import sentry_sdk

from .bench import (
    DEFAULT_D_VALUES,
    DEFAULT_METHODS,
    METHODS,
    BenchRunner,
    SweepConfig,
    ceiling_violations,
    run_method,
    run_scaling,
    write_csv,
)
from .config import Config
from .core import (
    AttentionInput,
    RngSeed,
    generate_gaussian_matrix,
    read_matrix,
    write_matrix,
)
from .errors import MatrixFormatError, SanityCheckError
from .metrics import (
    FLOPS_FORMULAS,
    flops_estimate,
    verify_jl,
    verify_lemma1,
    verify_prop1,
    verify_sketch_unbiased,
)
from .sketch import SketchKind

EXIT_USAGE = 1
EXIT_IO = 2
EXIT_FAIL = 3

VERIFY_DEFAULTS = {
    "prop1": {"n": 64, "p": 8, "d": 16, "delta": 0.1, "trials": 500},
    "lemma1": {"n": 128, "p": 8, "delta": 0.2, "trials": 200},
    "sketch_unbiased": {"n": 8, "d": 4, "trials": 100_000},
    "jl": {"n": 256, "d": 256, "epsilon": 0.25, "delta": 0.1, "trials": 1000},
}


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with the usage status instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _int_list(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(item) for item in raw.split(",") if item.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"expected a comma list of integers: {raw!r}"
        ) from e


def _name_list(raw: str) -> tuple[str, ...]:
    return tuple(item.strip() for item in raw.split(",") if item.strip())


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with every subcommand."""
    parser = _Parser(prog="sketchattn", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--oracle-cap", type=int, help="largest n for O(n²) work")
    common.add_argument("--workers", type=int, help="concurrent trials")

    bench = commands.add_parser("bench", parents=[common], help="error sweep")
    bench.add_argument("--n", type=int, default=512)
    bench.add_argument("--p", type=int, default=32)
    bench.add_argument("--d", type=_int_list, default=DEFAULT_D_VALUES)
    bench.add_argument("--methods", type=_name_list, default=DEFAULT_METHODS)
    bench.add_argument("--trials", type=int, default=64)
    bench.add_argument("--stdev", type=float)
    bench.add_argument("--unpadded-len", type=int)
    bench.add_argument("--out", default="-", help="CSV destination, - for stdout")
    bench.add_argument("--deterministic", action="store_true")

    verify = commands.add_parser("verify", parents=[common], help="check a bound")
    verify.add_argument("kind", choices=list(VERIFY_DEFAULTS))
    verify.add_argument("--n", type=int)
    verify.add_argument("--p", type=int)
    verify.add_argument("--d", type=int)
    verify.add_argument("--delta", type=float)
    verify.add_argument("--epsilon", type=float)
    verify.add_argument("--trials", type=int)
    verify.add_argument("--stdev", type=float)
    verify.add_argument("--flatten", type=float, default=0.0)
    verify.add_argument(
        "--sketch", choices=["gaussian", "subsample"], default="gaussian"
    )

    flops = commands.add_parser("flops", help="leading FLOPs terms")
    flops.add_argument("--n", type=int, default=1024)
    flops.add_argument("--p", type=int, default=32)
    flops.add_argument("--d", type=int, default=256)

    attn = commands.add_parser("attn", parents=[common], help="apply a method")
    attn.add_argument("--method", required=True)
    attn.add_argument("--q", required=True)
    attn.add_argument("--k", required=True)
    attn.add_argument("--v", required=True)
    attn.add_argument("--d", type=int, default=1)
    attn.add_argument("--unpadded-len", type=int)
    attn.add_argument("--out", required=True)

    gen = commands.add_parser("gen", help="write a Gaussian MATF matrix")
    gen.add_argument("--rows", type=int, required=True)
    gen.add_argument("--cols", type=int, required=True)
    gen.add_argument("--stdev", type=float)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--stream", type=int, default=0)
    gen.add_argument("--out", required=True)

    scaling = commands.add_parser(
        "scaling", parents=[common], help="linear-time certificate"
    )
    scaling.add_argument("--n", type=_int_list, default=(1024, 2048, 4096, 8192))
    scaling.add_argument("--p", type=int, default=32)
    scaling.add_argument("--d-factor", type=int, default=8)
    scaling.add_argument("--repeats", type=int, default=3)
    scaling.add_argument("--stdev", type=float)

    return parser


def _pick(value, fallback):
    return fallback if value is None else value


def cmd_bench(args: argparse.Namespace, config: Config) -> int:
    sweep = SweepConfig(
        n=args.n,
        p=args.p,
        d_values=args.d,
        methods=args.methods,
        trials=args.trials,
        stdev=_pick(args.stdev, config.stdev),
        seed=RngSeed(_pick(args.seed, config.seed)),
        output_path=args.out,
        unpadded_len=args.unpadded_len,
        oracle_cap=_pick(args.oracle_cap, config.oracle_cap),
        workers=_pick(args.workers, config.workers),
        deterministic=args.deterministic,
    )
    target = (
        nullcontext(sys.stdout)
        if sweep.output_path == "-"
        else open(sweep.output_path, "w", encoding="utf-8", newline="")
    )
    with target as stream:
        rows = asyncio.run(BenchRunner(sweep).run())
        write_csv(rows, stream, sweep.deterministic)
    print(f"✓ Wrote {len(rows)} rows", file=sys.stderr)

    violations = ceiling_violations(rows)
    if violations:
        raise SanityCheckError(
            f"{violations[0]} ({len(violations)} row(s) over the ceiling)"
        )
    return 0


def _report(lines: list[tuple[str, object]], passed: bool) -> int:
    for label, value in lines:
        print(f"{label}: {value}")
    print("PASS" if passed else "FAIL")
    status = "✓ Verification passed" if passed else "✗ Verification failed"
    print(status, file=sys.stderr)
    return 0 if passed else EXIT_FAIL


def cmd_verify(args: argparse.Namespace, config: Config) -> int:
    params = dict(VERIFY_DEFAULTS[args.kind])
    for name in ("n", "p", "d", "delta", "epsilon", "trials"):
        if getattr(args, name) is not None:
            params[name] = getattr(args, name)
    seed = RngSeed(_pick(args.seed, config.seed))
    workers = _pick(args.workers, config.workers)
    stdev = _pick(args.stdev, config.stdev)
    cap = _pick(args.oracle_cap, config.oracle_cap)

    if args.kind == "prop1":
        summary = verify_prop1(
            params["n"],
            params["p"],
            params["d"],
            params["delta"],
            params["trials"],
            seed,
            flatten=args.flatten,
            stdev=stdev,
            cap=cap,
            workers=workers,
        )
        lines = [
            ("violation rate", summary.violation_rate),
            ("mean squared error", summary.mean_sq_error),
            ("squared error SE", summary.sq_error_se),
            ("mean bound", summary.mean_bound),
            ("min beta", summary.min_beta),
        ]
        rate, tolerance = summary.violation_rate, summary.tolerance
    elif args.kind == "lemma1":
        summary = verify_lemma1(
            params["n"],
            params["p"],
            params["delta"],
            params["trials"],
            seed,
            stdev=stdev,
            cap=cap,
            workers=workers,
        )
        lines = [
            ("failure rate", summary.failure_rate),
            ("mean pilot size", summary.mean_pilot_size),
            ("max required pilot", summary.max_required_pilot),
            ("capped trials", summary.capped_trials),
            ("capped failure rate", summary.capped_failure_rate),
            ("uncapped failure rate", summary.uncapped_failure_rate),
        ]
        rate, tolerance = summary.uncapped_failure_rate, summary.tolerance
    elif args.kind == "sketch_unbiased":
        kind = (
            SketchKind.GAUSSIAN
            if args.sketch == "gaussian"
            else SketchKind.SUBSAMPLE_WITH_REPLACEMENT
        )
        summary = verify_sketch_unbiased(
            kind, params["n"], params["d"], params["trials"], seed, workers=workers
        )
        lines = [("sketch", kind.value)]
        rate, tolerance = summary.max_deviation_se, summary.tolerance
        lines.append(("max deviation (SE)", rate))
    else:
        summary = verify_jl(
            params["n"],
            params["d"],
            params["epsilon"],
            params["delta"],
            params["trials"],
            seed,
        )
        lines = [("failure rate", summary.failure_rate)]
        rate, tolerance = summary.failure_rate, summary.tolerance

    lines += [
        ("tolerance", tolerance),
        ("trials", summary.trials),
        ("seed", summary.seed),
    ]
    return _report(lines, summary.passed)


def cmd_flops(args: argparse.Namespace, config: Config) -> int:
    print(f"{'method':<12} {'formula':<8} {'flops':>16}")
    for method, (formula, _) in FLOPS_FORMULAS.items():
        count = flops_estimate(method, args.n, args.p, args.d)
        print(f"{method:<12} {formula:<8} {count:>16,}")
    return 0


def cmd_attn(args: argparse.Namespace, config: Config) -> int:
    if args.method not in METHODS:
        print(f"✗ Unknown method {args.method!r}", file=sys.stderr)
        return EXIT_USAGE
    inp = AttentionInput(
        read_matrix(args.q),
        read_matrix(args.k),
        read_matrix(args.v),
        unpadded_len=args.unpadded_len,
    )
    print(f"✓ Loaded {inp.n}x{inp.p} input", file=sys.stderr)
    result = run_method(
        args.method,
        inp,
        args.d,
        RngSeed(_pick(args.seed, config.seed)),
        _pick(args.oracle_cap, config.oracle_cap),
    )
    write_matrix(args.out, result.output)
    print(
        f"✓ Wrote {args.out} ({result.score_entries} score entries computed)",
        file=sys.stderr,
    )
    return 0


def cmd_gen(args: argparse.Namespace, config: Config) -> int:
    matrix = generate_gaussian_matrix(
        args.rows,
        args.cols,
        _pick(args.stdev, config.stdev),
        RngSeed(_pick(args.seed, config.seed), args.stream),
    )
    write_matrix(args.out, matrix)
    print(f"✓ Wrote {args.rows}x{args.cols} matrix to {args.out}", file=sys.stderr)
    return 0


def cmd_scaling(args: argparse.Namespace, config: Config) -> int:
    report = run_scaling(
        args.n,
        args.p,
        RngSeed(_pick(args.seed, config.seed)),
        d_factor=args.d_factor,
        repeats=args.repeats,
        stdev=_pick(args.stdev, config.stdev),
        oracle_cap=_pick(args.oracle_cap, config.oracle_cap),
    )
    print(f"{'n':>8} {'d':>6} {'skein_ns':>14} {'exact_ns':>14} {'deviation':>10}")
    for point in report.points:
        exact = "-" if point.exact_ns is None else str(point.exact_ns)
        print(
            f"{point.n:>8} {point.d:>6} {point.skein_ns:>14} {exact:>14} "
            f"{point.deviation:>10.3f}"
        )
    print(f"slope: {report.slope} ns per n·d")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else EXIT_FAIL


COMMANDS = {
    "bench": cmd_bench,
    "verify": cmd_verify,
    "flops": cmd_flops,
    "attn": cmd_attn,
    "gen": cmd_gen,
    "scaling": cmd_scaling,
}


def main(argv: list[str] | None = None) -> None:
    """Main entry point for the CLI application."""

    args = build_parser().parse_args(argv)
    print(f"Running sketchattn {args.command}...", file=sys.stderr)
    config = None
    try:
        config = Config.from_env()

        if config.sentry_dsn:
            sentry_sdk.init(
                dsn=config.sentry_dsn,
            )

        code = COMMANDS[args.command](args, config)
    except SanityCheckError as e:
        if config and config.sentry_dsn:
            sentry_sdk.capture_exception(e)
        print(f"✗ Sanity check failed: {e}", file=sys.stderr)
        sys.exit(EXIT_FAIL)
    except (MatrixFormatError, OSError) as e:
        if config and config.sentry_dsn:
            sentry_sdk.capture_exception(e)
        print(f"✗ I/O error: {e}", file=sys.stderr)
        sys.exit(EXIT_IO)
    except ValueError as e:
        if config and config.sentry_dsn:
            sentry_sdk.capture_exception(e)
        print(f"✗ Invalid argument: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except Exception as e:
        if config and config.sentry_dsn:
            sentry_sdk.capture_exception(e)
        print(f"✗ Error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)

    if code:
        sys.exit(code)


if __name__ == "__main__":
    main()
