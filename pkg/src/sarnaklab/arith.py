"""Möbius sieving and the Cesàro / logarithmic averaging operators."""

from __future__ import annotations

import csv
import enum
import math
import struct
from dataclasses import dataclass
from math import isqrt

import numpy as np

DEFAULT_BLOCK = 1 << 20
MAX_HI = np.iinfo(np.int64).max // 4
_HEADER = struct.Struct("<II")


class AverageKind(str, enum.Enum):
    """Normalisation used by :func:`weighted_average`."""

    CESARO = "cesaro"
    LOGARITHMIC = "logarithmic"


@dataclass(frozen=True, eq=False)
class MobiusTable:
    """Möbius values on the integer interval ``[lo, hi]``.

    Attributes:
        lo: First integer covered.
        hi: Last integer covered (inclusive).
        values: ``int8`` array with ``values[n - lo] = mu(n)``.
    """

    lo: int
    hi: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.hi - self.lo + 1,):
            raise ValueError("values length does not match [lo, hi]")

    def __len__(self):
        return self.hi - self.lo + 1

    def __getitem__(self, n):
        if isinstance(n, slice):
            raise TypeError("use window(a, b) for ranges")
        if not self.lo <= n <= self.hi:
            raise IndexError(f"{n} outside [{self.lo}, {self.hi}]")
        return int(self.values[n - self.lo])

    def covers(self, a, b):
        return self.lo <= a and b <= self.hi

    def window(self, a, b):
        """Values for ``n`` in ``[a, b]`` as a read-only view."""
        if not self.covers(a, b):
            raise ValueError(f"table [{self.lo}, {self.hi}] does not cover [{a}, {b}]")
        view = self.values[a - self.lo : b - self.lo + 1]
        view.flags.writeable = False
        return view

    def to_bytes(self):
        """Binary export: little-endian ``uint32`` pair (lo, hi), then int8 values."""
        if self.hi >= 2**32:
            raise OverflowError("binary export supports hi < 2**32")
        return _HEADER.pack(self.lo, self.hi) + self.values.astype(np.int8).tobytes()

    @classmethod
    def from_bytes(cls, blob):
        lo, hi = _HEADER.unpack_from(blob)
        values = np.frombuffer(blob, dtype=np.int8, offset=_HEADER.size).copy()
        return cls(lo, hi, values)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["n", "mu"])
            for n, v in zip(range(self.lo, self.hi + 1), self.values.tolist()):
                writer.writerow([n, v])


def small_primes(limit):
    """Primes ``p <= limit`` by the sieve of Eratosthenes."""
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    flags = np.ones(limit + 1, dtype=bool)
    flags[:2] = False
    for p in range(2, isqrt(limit) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return np.flatnonzero(flags).astype(np.int64)


def _mobius_block(a, b, primes):
    size = b - a + 1
    mu = np.ones(size, dtype=np.int8)
    # product of the small primes dividing n; differs from n iff n has a
    # square factor or exactly one prime factor above sqrt(b)
    rad = np.ones(size, dtype=np.int64)
    for p in primes:
        p = int(p)
        if p * p > b:
            break
        start = (-a) % p
        mu[start::p] *= -1
        rad[start::p] *= p
        start = (-a) % (p * p)
        mu[start :: p * p] = 0
    n = np.arange(a, b + 1, dtype=np.int64)
    big = rad != n
    mu[big] *= -1
    return mu


def sieve_mobius(lo, hi, block_size=DEFAULT_BLOCK):
    """Segmented Möbius sieve on ``[lo, hi]``.

    Memory beyond the output is ``O(block_size + sqrt(hi))``.

    Args:
        lo: First integer, at least 1.
        hi: Last integer (inclusive).
        block_size: Number of entries sieved per segment.

    Returns:
        MobiusTable: Values of mu on ``[lo, hi]``.
    """
    lo, hi = int(lo), int(hi)
    if lo < 1 or hi < lo:
        raise ValueError(f"need 1 <= lo <= hi, got [{lo}, {hi}]")
    if hi > MAX_HI:
        raise OverflowError(f"hi={hi} exceeds the supported range")
    if block_size < 1:
        raise ValueError("block_size must be positive")
    primes = small_primes(isqrt(hi))
    out = np.empty(hi - lo + 1, dtype=np.int8)
    for start in range(lo, hi + 1, block_size):
        stop = min(start + block_size - 1, hi)
        out[start - lo : stop - lo + 1] = _mobius_block(start, stop, primes)
    return MobiusTable(lo, hi, out)


def harmonic_number(N):
    """``M_N = sum_{n <= N} 1/n`` with exact float summation."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    if N == 0:
        return 0.0
    return math.fsum(1.0 / np.arange(1, N + 1, dtype=np.float64))


def _fsum_complex(values):
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return complex(math.fsum(values.real), math.fsum(values.imag))
    return complex(math.fsum(values), 0.0)


def weighted_average(seq, N, kind=AverageKind.CESARO):
    """Cesàro or logarithmic average of ``a_1, ..., a_N``.

    Args:
        seq: Array-like with ``seq[i] = a_{i+1}``; at least ``N`` entries.
        N: Number of terms.
        kind: ``cesaro`` gives ``(1/N) sum a_n``; ``logarithmic`` gives
            ``(1/M_N) sum a_n / n``.

    Returns:
        complex: The average, summed in ascending ``n`` without rounding
        accumulation.
    """
    N = int(N)
    if N < 1:
        raise ValueError("N must be positive")
    kind = AverageKind(kind)
    a = np.asarray(seq)[:N]
    if a.shape[0] < N:
        raise ValueError(f"sequence has {a.shape[0]} terms, need {N}")
    if kind is AverageKind.CESARO:
        return _fsum_complex(a) / N
    weights = 1.0 / np.arange(1, N + 1, dtype=np.float64)
    return _fsum_complex(a * weights) / harmonic_number(N)


@dataclass(frozen=True)
class ChowlaSum:
    """Two-term logarithmic correlation ``sum_{n<=N} mu(n+h1) mu(n+h2) / n``.

    ``by_log`` divides by ``ln N``; ``by_harmonic`` divides by ``M_N``.
    """

    h1: int
    h2: int
    N: int
    raw: float
    by_log: float
    by_harmonic: float


def chowla_log_sum(h1, h2, N, table=None):
    """Two-term logarithmic Chowla sum with both normalisations.

    Args:
        h1, h2: Shifts with ``0 <= h1 < h2``.
        N: Upper summation limit, at least 2.
        table: MobiusTable covering ``[1, N + h2]``; sieved on demand if None.
    """
    h1, h2, N = int(h1), int(h2), int(N)
    if not 0 <= h1 < h2:
        raise ValueError(f"need 0 <= h1 < h2, got h1={h1}, h2={h2}")
    if N < 2:
        raise ValueError("N must be at least 2 for the 1/ln N normalisation")
    if table is None:
        table = sieve_mobius(1, N + h2)
    if not table.covers(1 + h1, N + h2):
        raise ValueError(f"table [{table.lo}, {table.hi}] does not cover [1, {N + h2}]")
    prod = table.window(1 + h1, N + h1).astype(np.float64) * table.window(1 + h2, N + h2)
    raw = math.fsum(prod / np.arange(1, N + 1, dtype=np.float64))
    return ChowlaSum(h1, h2, N, raw, raw / math.log(N), raw / harmonic_number(N))
