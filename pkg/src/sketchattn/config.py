# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Configuration management for sketchattn."""

import os
import sys
from dataclasses import dataclass

from dotenv import load_dotenv

DEFAULT_ORACLE_CAP = 8192


def _read_int(name: str, default: int, minimum: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError as e:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from e
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def _read_positive_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        value = float(raw)
    except ValueError as e:
        raise ValueError(f"{name} must be a number, got {raw!r}") from e
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value


@dataclass
class Config:
    """Application configuration."""

    seed: int = 0
    oracle_cap: int = DEFAULT_ORACLE_CAP
    workers: int = 4
    stdev: float = 1.0
    sentry_dsn: str | None = None

    @classmethod
    def from_env(cls) -> "Config":
        """Load configuration from environment variables."""
        print("Loading config...", file=sys.stderr)

        load_dotenv()

        seed = _read_int("SKETCHATTN_SEED", 0, 0)
        if seed >= 2**64:
            raise ValueError(f"SKETCHATTN_SEED must fit in 64 bits, got {seed}")
        oracle_cap = _read_int("SKETCHATTN_ORACLE_CAP", DEFAULT_ORACLE_CAP, 1)
        workers = _read_int("SKETCHATTN_WORKERS", 4, 1)
        stdev = _read_positive_float("SKETCHATTN_STDEV", 1.0)
        sentry_dsn = os.getenv("SENTRY_DSN") or None

        print("✓ Config loaded", file=sys.stderr)

        return cls(
            seed=seed,
            oracle_cap=oracle_cap,
            workers=workers,
            stdev=stdev,
            sentry_dsn=sentry_dsn,
        )
