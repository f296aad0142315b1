# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Matrix type, seeded randomness and the MATF on-disk format."""

from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .errors import InvalidArgumentError, MatrixFormatError

DenseMatrix = npt.NDArray[np.float64]

MATF_MAGIC = b"MATF"
MATF_HEADER_SIZE = 12

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix(master_seed: int, stream_id: int) -> int:
    """Mix two 64-bit values into one seed.

    Injective in ``stream_id`` for a fixed ``master_seed`` since the
    splitmix64 finalizer is a bijection on 64-bit words.
    """
    return _splitmix64((master_seed & _MASK64) ^ _splitmix64(stream_id & _MASK64))


@dataclass(frozen=True)
class RngSeed:
    """Seed of a reproducible random stream."""

    master_seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= value <= _MASK64:
                raise InvalidArgumentError(
                    f"{name} must be a 64-bit unsigned integer, got {value}"
                )

    def for_trial(self, trial: int) -> "RngSeed":
        """Seed of trial ``trial``, derived as mix(master_seed, trial)."""
        return RngSeed(mix(self.master_seed, trial), self.stream_id)

    def substream(self, k: int) -> "RngSeed":
        """Independent sub-stream ``k`` of this seed."""
        return RngSeed(self.master_seed, mix(self.stream_id, k))

    def generator(self) -> np.random.Generator:
        """Create a fresh generator positioned at the start of the stream."""
        bit_generator = np.random.PCG64(mix(self.master_seed, self.stream_id))
        return np.random.Generator(bit_generator)


def as_matrix(data: npt.ArrayLike, name: str = "matrix") -> DenseMatrix:
    """Copy ``data`` into a read-only, row-major float64 matrix.

    Raises:
        InvalidArgumentError: If the data is not 2-D or has non-finite entries
    """
    matrix = np.array(data, dtype=np.float64, order="C", copy=True)
    if matrix.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    matrix.flags.writeable = False
    return matrix


@dataclass(frozen=True, eq=False)
class AttentionInput:
    """Validated (Q, K, V) triple.

    Rows with index >= ``unpadded_len`` are padding. Padding rows of K and V
    are zeroed on construction.
    """

    q: DenseMatrix
    k: DenseMatrix
    v: DenseMatrix
    unpadded_len: int | None = field(default=None)

    def __post_init__(self):
        q = as_matrix(self.q, "Q")
        k = np.array(as_matrix(self.k, "K"))
        v = np.array(as_matrix(self.v, "V"))
        if not q.shape == k.shape == v.shape:
            raise InvalidArgumentError(
                f"Q, K, V must share one shape, got {q.shape}, {k.shape}, {v.shape}"
            )
        n, p = q.shape
        if n < 1 or p < 1:
            raise InvalidArgumentError(f"empty attention input of shape {q.shape}")
        m = n if self.unpadded_len is None else int(self.unpadded_len)
        if not 1 <= m <= n:
            raise InvalidArgumentError(f"unpadded length must be in [1, {n}], got {m}")

        k[m:] = 0.0
        v[m:] = 0.0
        k.flags.writeable = False
        v.flags.writeable = False

        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "unpadded_len", m)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def p(self) -> int:
        return self.q.shape[1]

    @property
    def m(self) -> int:
        return self.unpadded_len

    def padded(self, extra_rows: int) -> "AttentionInput":
        """Append ``extra_rows`` zero rows to Q, K and V; the unpadded length stays."""
        if extra_rows < 0:
            raise InvalidArgumentError(f"extra_rows must be >= 0, got {extra_rows}")
        pad = np.zeros((extra_rows, self.p))
        return AttentionInput(
            np.vstack([self.q, pad]),
            np.vstack([self.k, pad]),
            np.vstack([self.v, pad]),
            unpadded_len=self.m,
        )


def generate_gaussian_matrix(
    rows: int, cols: int, stdev: float, seed: RngSeed
) -> DenseMatrix:
    """Draw a rows×cols matrix with i.i.d. N(0, stdev²) entries.

    Raises:
        InvalidArgumentError: On zero dimensions or non-positive stdev
    """
    if rows < 1 or cols < 1:
        raise InvalidArgumentError(f"dimensions must be >= 1, got {rows}x{cols}")
    if not stdev > 0:
        raise InvalidArgumentError(f"stdev must be > 0, got {stdev}")
    return as_matrix(seed.generator().normal(0.0, stdev, size=(rows, cols)))


def random_attention_input(
    n: int,
    p: int,
    stdev: float,
    seed: RngSeed,
    unpadded_len: int | None = None,
) -> AttentionInput:
    """Gaussian Q, K, V drawn from sub-streams 0, 1 and 2 of ``seed``."""
    q, k, v = (
        generate_gaussian_matrix(n, p, stdev, seed.substream(stream))
        for stream in range(3)
    )
    return AttentionInput(q, k, v, unpadded_len=unpadded_len)


def write_matrix(path: str | PathLike, matrix: DenseMatrix) -> None:
    """Write ``matrix`` as a MATF file."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise InvalidArgumentError(f"matrix must be 2-D, got shape {matrix.shape}")
    rows, cols = matrix.shape
    header = MATF_MAGIC + np.array([rows, cols], dtype="<u4").tobytes()
    payload = np.ascontiguousarray(matrix, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def read_matrix(path: str | PathLike) -> DenseMatrix:
    """Read a MATF file.

    Raises:
        MatrixFormatError: On bad magic, truncated payload or non-finite entry
    """
    data = Path(path).read_bytes()

    if len(data) < MATF_HEADER_SIZE:
        raise MatrixFormatError(
            f"truncated header: {len(data)} of {MATF_HEADER_SIZE} bytes", len(data)
        )
    if data[:4] != MATF_MAGIC:
        raise MatrixFormatError(f"bad magic {data[:4]!r}, expected {MATF_MAGIC!r}", 0)

    rows, cols = (int(x) for x in np.frombuffer(data, dtype="<u4", count=2, offset=4))
    expected = MATF_HEADER_SIZE + 8 * rows * cols
    if len(data) < expected:
        raise MatrixFormatError(
            f"truncated payload: expected {expected} bytes for {rows}x{cols}, "
            f"got {len(data)}",
            len(data),
        )
    if len(data) > expected:
        raise MatrixFormatError(
            f"{len(data) - expected} trailing bytes after {rows}x{cols} payload",
            expected,
        )

    values = np.frombuffer(
        data, dtype="<f8", count=rows * cols, offset=MATF_HEADER_SIZE
    ).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise MatrixFormatError(
            f"non-finite entry {values[bad[0]]}", MATF_HEADER_SIZE + 8 * int(bad[0])
        )

    matrix = values.reshape(rows, cols)
    matrix.flags.writeable = False
    return matrix
