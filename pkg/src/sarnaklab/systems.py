"""Topological dynamical systems, their metrics and orbit observables.

Points are immutable values. Systems are stateless descriptions that expose
``apply`` and ``distance`` for single points, plus a vectorised path used by
the covering machinery: ``encode`` packs a list of points into arrays and
``mean_distances`` returns the matrix of mean-metric distances
``(1/n) sum_{k<n} d(T^k a, T^k b)`` between two index sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

TORUS_METRICS = ("arc", "chord")
ALPHABETS = ("binary", "torus_p", "nil_p")
DEFAULT_RADIUS = 16
_CHUNK = 1 << 22


def circle_distance(s, t, metric="arc"):
    """Distance on R/Z. ``arc`` is ``min(|s-t|, 1-|s-t|)``; ``chord`` is ``|e(s)-e(t)|``."""
    diff = np.mod(np.asarray(s, dtype=float) - np.asarray(t, dtype=float), 1.0)
    if metric == "arc":
        return np.minimum(diff, 1.0 - diff)
    if metric == "chord":
        return 2.0 * np.abs(np.sin(np.pi * diff))
    raise ValueError(f"unknown torus metric {metric!r}")


def _torus_max(metric):
    return 0.5 if metric == "arc" else 2.0


class Distance(NamedTuple):
    """Metric value and a rigorous bound on the truncated tail."""

    value: float
    tail: float


# ---------------------------------------------------------------- points


@dataclass(frozen=True)
class CirclePoint:
    t: float

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t) % 1.0)


@dataclass(frozen=True)
class ExtendedTorusPoint:
    """A point of the circle with one extra isolated point ``p`` (``t is None``)."""

    t: float | None

    def __post_init__(self):
        if self.t is not None:
            object.__setattr__(self, "t", float(self.t) % 1.0)

    @property
    def is_p(self):
        return self.t is None


@dataclass(frozen=True)
class ProductPoint:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))


@dataclass(frozen=True, eq=False)
class SymbolWindow:
    """Finite window of a two-sided sequence, ``symbols[center]`` is coordinate 0.

    For ``torus_p`` symbols are angles in [0, 1) with NaN standing for ``p``;
    for ``nil_p`` each symbol is a row of Mal'cev coordinates, NaN rows for ``p``.
    """

    alphabet: str
    symbols: np.ndarray
    center: int

    def __post_init__(self):
        if self.alphabet not in ALPHABETS:
            raise ValueError(f"unknown alphabet {self.alphabet!r}")
        arr = np.array(self.symbols, dtype=np.int8 if self.alphabet == "binary" else float)
        if self.alphabet == "torus_p":
            arr = np.where(np.isnan(arr), np.nan, np.mod(arr, 1.0))
        if not 0 <= self.center < arr.shape[0]:
            raise ValueError("center index outside the window")
        arr.flags.writeable = False
        object.__setattr__(self, "symbols", arr)

    @property
    def radius(self):
        """Support radius: coordinates ``-radius..radius`` are stored."""
        return min(self.center, self.symbols.shape[0] - 1 - self.center)

    @property
    def left(self):
        return self.center

    @property
    def right(self):
        return self.symbols.shape[0] - 1 - self.center

    def symbol(self, n):
        if not -self.left <= n <= self.right:
            raise IndexError(f"coordinate {n} outside stored support [-{self.left}, {self.right}]")
        return self.symbols[self.center + n]

    def span(self, a, b):
        """Symbols at coordinates ``a..b`` inclusive."""
        if a < -self.left or b > self.right:
            raise ValueError(
                f"window supports [-{self.left}, {self.right}], need [{a}, {b}]"
            )
        return self.symbols[self.center + a : self.center + b + 1]

    def shifted(self, k=1):
        return SymbolWindow(self.alphabet, self.symbols, self.center + k)

    def __eq__(self, other):
        return (
            isinstance(other, SymbolWindow)
            and self.alphabet == other.alphabet
            and self.center == other.center
            and np.array_equal(self.symbols, other.symbols, equal_nan=True)
        )

    def __hash__(self):
        return hash((self.alphabet, self.center, self.symbols.tobytes()))


@dataclass(frozen=True, eq=False)
class SequenceSpec:
    """A finite stretch ``y(lo), ..., y(hi)`` of a two-sided sequence.

    File format: a header line ``# alphabet=<tag> lo=<int> hi=<int>`` followed
    by one symbol per line; ``p`` marks the extra point, ``nil_p`` symbols are
    space-separated coordinates.
    """

    alphabet: str
    lo: int
    symbols: np.ndarray

    @property
    def hi(self):
        return self.lo + self.symbols.shape[0] - 1

    def window(self, n, radius):
        """The window of ``sigma^n y`` with support ``radius`` on both sides."""
        a, b = n - radius, n + radius
        if a < self.lo or b > self.hi:
            raise ValueError(f"sequence covers [{self.lo}, {self.hi}], need [{a}, {b}]")
        return SymbolWindow(self.alphabet, self.symbols[a - self.lo : b - self.lo + 1], radius)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"# alphabet={self.alphabet} lo={self.lo} hi={self.hi}\n")
            for s in self.symbols:
                fh.write(_format_symbol(self.alphabet, s) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().lstrip("#").split()
            meta = dict(item.split("=", 1) for item in header)
            rows = [line.split() for line in fh if line.strip()]
        alphabet, lo, hi = meta["alphabet"], int(meta["lo"]), int(meta["hi"])
        if len(rows) != hi - lo + 1:
            raise ValueError(f"header declares {hi - lo + 1} symbols, payload has {len(rows)}")
        if alphabet == "binary":
            symbols = np.array([int(r[0]) for r in rows], dtype=np.int8)
        elif alphabet == "torus_p":
            symbols = np.array([np.nan if r[0] == "p" else float(r[0]) for r in rows])
        else:
            symbols = np.array([[np.nan] * 3 if r[0] == "p" else [float(v) for v in r] for r in rows])
        return cls(alphabet, lo, symbols)


def _format_symbol(alphabet, s):
    if alphabet == "binary":
        return str(int(s))
    if alphabet == "torus_p":
        return "p" if np.isnan(s) else repr(float(s))
    return "p" if np.isnan(s).any() else " ".join(repr(float(v)) for v in s)


# ------------------------------------------------------------- alphabets


def symbol_distance(alphabet, a, b, torus_metric="arc"):
    """Elementwise distance between symbol arrays of one alphabet (``p`` is at distance 1)."""
    if alphabet == "binary":
        return np.abs(a.astype(np.float64) - b)
    if alphabet == "torus_p":
        pa, pb = np.isnan(a), np.isnan(b)
        d = circle_distance(np.where(pa, 0.0, a), np.where(pb, 0.0, b), torus_metric)
        return np.where(pa | pb, np.where(pa & pb, 0.0, 1.0), d)
    if alphabet == "nil_p":
        from .nil import HEISENBERG, quotient_distance_fast

        pa, pb = np.isnan(a).any(-1), np.isnan(b).any(-1)
        d = quotient_distance_fast(HEISENBERG, np.nan_to_num(a), np.nan_to_num(b))
        return np.where(pa | pb, np.where(pa & pb, 0.0, 1.0), d)
    raise ValueError(f"unknown alphabet {alphabet!r}")


def max_symbol_distance(alphabet, torus_metric="arc"):
    if alphabet == "binary":
        return 1.0
    if alphabet == "torus_p":
        return max(1.0, _torus_max(torus_metric))
    return 1.0


def window_weights(R):
    """Weights ``2^{-|j|-2}`` for ``j = -R..R``."""
    j = np.arange(-R, R + 1)
    return 2.0 ** (-np.abs(j) - 2)


def mean_weights(n, R):
    """Coefficient of position ``m`` (``m = -R..n-1+R``) in the mean metric over ``n`` steps."""
    w = window_weights(R)
    c = np.zeros(n + 2 * R)
    for k in range(n):
        c[k : k + 2 * R + 1] += w
    return c / n


# --------------------------------------------------------------- systems


class Encoded(NamedTuple):
    data: object
    n: int
    tail: float


def _chunks(total, per_item):
    step = max(1, _CHUNK // max(per_item, 1))
    for start in range(0, total, step):
        yield slice(start, min(start + step, total))


class System:
    """Shared plumbing; subclasses provide ``apply``, ``encode`` and ``step_distances``."""

    isometric = False
    invertible = True

    def iterate(self, x, k):
        for _ in range(k):
            x = self.apply(x)
        return x

    def distance(self, a, b):
        enc = self.encode([a, b], 1)
        value = float(self.step_distances(enc, [0], [1])[0, 0, 0])
        return Distance(value, enc.tail)

    def mean_distances(self, enc, rows, cols):
        """``(len(rows), len(cols))`` matrix of mean-metric distances over ``enc.n`` steps."""
        rows, cols = np.atleast_1d(rows), np.atleast_1d(cols)
        out = np.empty((rows.size, cols.size))
        for sl in _chunks(rows.size, cols.size * enc.n):
            out[sl] = self.step_distances(enc, rows[sl], cols).mean(axis=-1)
        return out

    def tail_bound(self):
        return 0.0


def _check(points, cls):
    for p in points:
        if not isinstance(p, cls):
            raise TypeError(f"expected {cls.__name__}, got {type(p).__name__}")


@dataclass(frozen=True)
class Rotation(System):
    """``t -> t + alpha`` on R/Z."""

    alpha: float
    metric: str = "arc"
    isometric = True

    def apply(self, x):
        _check([x], CirclePoint)
        return CirclePoint(x.t + self.alpha)

    def iterate(self, x, k):
        _check([x], CirclePoint)
        return CirclePoint(x.t + k * self.alpha)

    def encode(self, points, n):
        _check(points, CirclePoint)
        return Encoded(np.array([p.t for p in points]), n, 0.0)

    def step_distances(self, enc, rows, cols):
        t = enc.data
        k = np.arange(enc.n) * self.alpha
        a = np.mod(t[np.atleast_1d(rows), None, None] + k, 1.0)
        b = np.mod(t[None, np.atleast_1d(cols), None] + k, 1.0)
        return circle_distance(a, b, self.metric)

    def mean_distances(self, enc, rows, cols):
        # isometry: every step distance equals the initial one
        t = enc.data
        return circle_distance(t[np.atleast_1d(rows), None], t[None, np.atleast_1d(cols)], self.metric)

    def orbit(self, x0, N, start=1):
        n = np.arange(start, start + N, dtype=np.float64)
        return np.mod(x0.t + n * self.alpha, 1.0)


@dataclass(frozen=True)
class Skew(System):
    """``(x, e(y)) -> (x, e(y + x))`` on ``C x T``, optionally with a fixed point ``p``.

    Points are ``ProductPoint((CirclePoint(x), CirclePoint(y)))`` or
    ``ExtendedTorusPoint(None)`` for ``p``. The metric is the maximum of the
    base distance and the fibre distance; ``fiber_metric='chord'`` is the
    complex-plane embedding.
    """

    frequencies: object = None
    fiber_metric: str = "chord"
    base_metric: str = "arc"

    def point(self, x, y):
        return ProductPoint((CirclePoint(x), CirclePoint(y)))

    def apply(self, pt):
        if isinstance(pt, ExtendedTorusPoint) and pt.is_p:
            return pt
        x, y = self._parts(pt)
        return self.point(x, y + x)

    def iterate(self, pt, k):
        if isinstance(pt, ExtendedTorusPoint) and pt.is_p:
            return pt
        x, y = self._parts(pt)
        return self.point(x, y + k * x)

    def _parts(self, pt):
        if not (isinstance(pt, ProductPoint) and len(pt.parts) == 2):
            raise TypeError("skew points are ProductPoint((CirclePoint, CirclePoint)) or p")
        return pt.parts[0].t, pt.parts[1].t

    def encode(self, points, n):
        data = np.full((len(points), 2), np.nan)
        for i, pt in enumerate(points):
            if not (isinstance(pt, ExtendedTorusPoint) and pt.is_p):
                data[i] = self._parts(pt)
        return Encoded(data, n, 0.0)

    def step_distances(self, enc, rows, cols):
        a = enc.data[np.atleast_1d(rows)][:, None, :]
        b = enc.data[np.atleast_1d(cols)][None, :, :]
        k = np.arange(enc.n)
        pa, pb = np.isnan(a[..., 0]), np.isnan(b[..., 0])
        a, b = np.nan_to_num(a), np.nan_to_num(b)
        base = circle_distance(a[..., 0], b[..., 0], self.base_metric)
        dx = (a[..., 0] - b[..., 0])[..., None]
        fiber = circle_distance((a[..., 1] - b[..., 1])[..., None] + k * dx, 0.0, self.fiber_metric)
        d = np.maximum(base[..., None], fiber)
        pp = np.where(pa & pb, 0.0, 1.0)[..., None]
        return np.where((pa | pb)[..., None], pp, d)

    def within(self, enc, rows, cols, epsilon):
        """Boolean matrix ``d_n < epsilon`` that skips pairs a lower bound already excludes.

        Along the orbit the fibre difference is an arithmetic progression with
        step ``delta``, the base gap. Any ``m = floor(1/(2 delta))`` consecutive
        terms stay in an arc shorter than 1/2, so their circle distances to 0
        sum to at least ``delta * floor((m-1)^2/4)``. The chord is at least 4
        times the circle distance. Pairs whose bound reaches ``epsilon * n``
        are outside the ball; the rest are evaluated exactly.
        """
        rows, cols = np.atleast_1d(rows), np.atleast_1d(cols)
        a, b = enc.data[rows][:, None, :], enc.data[cols][None, :, :]
        n = enc.n
        with np.errstate(invalid="ignore"):
            base = circle_distance(a[..., 0], b[..., 0], self.base_metric)
            delta = circle_distance(a[..., 0], b[..., 0], "arc")
        m = np.full(delta.shape, n, dtype=np.int64)
        pos = delta > 0
        m[pos] = np.clip(np.floor(0.5 / delta[pos]), 1, n).astype(np.int64)
        factor = 4.0 if self.fiber_metric == "chord" else 1.0
        bound = np.maximum(n * base, factor * (n // m) * delta * np.floor((m - 1) ** 2 / 4))
        maybe = ~(bound * (1 - 1e-12) >= epsilon * n)
        out = np.zeros(delta.shape, dtype=bool)
        i, j = np.nonzero(maybe)
        per = max(1, (1 << 22) // max(n, 1))
        for s in range(0, i.size, per):
            ii, jj = i[s : s + per], j[s : s + per]
            d = self._pair_means(enc, rows[ii], cols[jj])
            out[ii, jj] = d < epsilon
        return out

    def _pair_means(self, enc, r, c):
        a, b = enc.data[r], enc.data[c]
        k = np.arange(enc.n)
        pa, pb = np.isnan(a[:, 0]), np.isnan(b[:, 0])
        a, b = np.nan_to_num(a), np.nan_to_num(b)
        base = circle_distance(a[:, 0], b[:, 0], self.base_metric)
        dx = (a[:, 0] - b[:, 0])[:, None]
        fiber = circle_distance((a[:, 1] - b[:, 1])[:, None] + k * dx, 0.0, self.fiber_metric)
        d = np.maximum(base[:, None], fiber).mean(axis=-1)
        return np.where(pa | pb, np.where(pa & pb, 0.0, 1.0), d)

    def orbit(self, pt, N, start=1):
        x, y = self._parts(pt)
        n = np.arange(start, start + N, dtype=np.float64)
        return np.full(N, x), np.mod(y + n * x, 1.0)


@dataclass(frozen=True)
class Shift(System):
    """Left shift on two-sided sequences over ``binary``, ``torus_p`` or ``nil_p``.

    ``radius`` is the truncation radius ``R`` of the metric: windows must store
    coordinates ``-R..R`` around every position that is compared, and the
    neglected tail is at most ``max_symbol_distance * 2^{-R-1}``.
    """

    alphabet: str = "binary"
    radius: int = DEFAULT_RADIUS
    torus_metric: str = "arc"

    def __post_init__(self):
        if self.alphabet not in ALPHABETS:
            raise ValueError(f"unknown alphabet {self.alphabet!r}")

    def apply(self, x):
        _check([x], SymbolWindow)
        if x.alphabet != self.alphabet:
            raise TypeError(f"window over {x.alphabet!r}, shift over {self.alphabet!r}")
        if x.right < 1:
            raise ValueError("window has no stored coordinate to the right of the center")
        return x.shifted(1)

    def iterate(self, x, k):
        _check([x], SymbolWindow)
        return x.shifted(k)

    def tail_bound(self):
        return max_symbol_distance(self.alphabet, self.torus_metric) * 2.0 ** (-self.radius - 1)

    def encode(self, points, n):
        _check(points, SymbolWindow)
        R = self.radius
        spans = []
        for x in points:
            if x.alphabet != self.alphabet:
                raise TypeError(f"window over {x.alphabet!r}, shift over {self.alphabet!r}")
            if x.left < R or x.right < n - 1 + R:
                raise ValueError(
                    f"window supports [-{x.left}, {x.right}], mean metric over {n} steps "
                    f"with truncation radius {R} needs [-{R}, {n - 1 + R}]"
                )
            spans.append(x.span(-R, n - 1 + R))
        return Encoded(np.stack(spans), n, self.tail_bound())

    def _delta(self, enc, rows, cols):
        a = enc.data[np.atleast_1d(rows)][:, None]
        b = enc.data[np.atleast_1d(cols)][None, :]
        return symbol_distance(self.alphabet, a, b, self.torus_metric)

    def step_distances(self, enc, rows, cols):
        R, n = self.radius, enc.n
        delta = self._delta(enc, rows, cols)
        out = np.zeros(delta.shape[:2] + (n,))
        for j, w in zip(range(2 * R + 1), window_weights(R)):
            out += w * delta[..., j : j + n]
        return out

    def mean_distances(self, enc, rows, cols):
        rows, cols = np.atleast_1d(rows), np.atleast_1d(cols)
        c = mean_weights(enc.n, self.radius)
        if self.alphabet == "binary":
            # |a-b| = a + b - 2ab on {0,1}: one weighted Gram matrix
            A = enc.data[rows].astype(np.float64)
            B = enc.data[cols].astype(np.float64)
            d = (A @ c)[:, None] + (B @ c)[None, :] - 2.0 * (A * c) @ B.T
            return np.maximum(d, 0.0)
        out = np.empty((rows.size, cols.size))
        for sl in _chunks(rows.size, cols.size * c.size * 3):
            out[sl] = self._delta(enc, rows[sl], cols) @ c
        return out

    def random_window(self, rng, left, right, torus_levels=None):
        """Window with independent uniform symbols on ``[-left, right]``."""
        size = left + right + 1
        if self.alphabet == "binary":
            symbols = rng.integers(0, 2, size=size)
        elif self.alphabet == "torus_p":
            symbols = rng.random(size)
            if torus_levels:
                symbols = np.floor(symbols * torus_levels) / torus_levels
        else:
            symbols = rng.random((size, 3))
        return SymbolWindow(self.alphabet, symbols, left)


@dataclass(frozen=True)
class OrbitClosure(Shift):
    """Shift restricted to the orbit closure of one stored sequence ``y``."""

    sequence: SequenceSpec = None

    def __post_init__(self):
        if self.sequence is None:
            raise ValueError("orbit closure needs a sequence")
        object.__setattr__(self, "alphabet", self.sequence.alphabet)

    def orbit_point(self, j, margin):
        """``sigma^j y`` with coordinates ``-radius..margin + radius`` stored."""
        R = self.radius
        a, b = j - R, j + margin + R
        seq = self.sequence
        if a < seq.lo or b > seq.hi:
            raise ValueError(f"sequence covers [{seq.lo}, {seq.hi}], need [{a}, {b}]")
        return SymbolWindow(seq.alphabet, seq.symbols[a - seq.lo : b - seq.lo + 1], R)


@dataclass(frozen=True)
class Product(System):
    """Finite product with the maximum of the factor metrics."""

    factors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def isometric(self):
        return all(f.isometric for f in self.factors)

    def apply(self, x):
        _check([x], ProductPoint)
        if len(x.parts) != len(self.factors):
            raise TypeError("point and system have different numbers of factors")
        return ProductPoint(tuple(f.apply(p) for f, p in zip(self.factors, x.parts)))

    def encode(self, points, n):
        _check(points, ProductPoint)
        encs = tuple(
            f.encode([p.parts[i] for p in points], n) for i, f in enumerate(self.factors)
        )
        return Encoded(encs, n, max(e.tail for e in encs))

    def step_distances(self, enc, rows, cols):
        parts = [f.step_distances(e, rows, cols) for f, e in zip(self.factors, enc.data)]
        return np.maximum.reduce(parts)

    def tail_bound(self):
        return max(f.tail_bound() for f in self.factors)


# ----------------------------------------------------------- observables


@dataclass(frozen=True)
class CircleCharacter:
    """``e(k t)`` of a circle coordinate; ``component`` selects the skew coordinate (0 base, 1 fibre)."""

    k: int = 1
    component: int | None = None

    def at(self, system, pt):
        if isinstance(pt, CirclePoint):
            return complex(np.exp(2j * np.pi * self.k * pt.t))
        if isinstance(pt, ExtendedTorusPoint) and pt.is_p:
            return 0j
        return complex(np.exp(2j * np.pi * self.k * pt.parts[self.component or 0].t))

    def modulus(self, delta, system=None):
        """Upper bound on ``|f(a) - f(b)|`` over ``d(a, b) < delta``."""
        metric = getattr(system, "metric", "arc")
        if isinstance(system, Skew):
            metric = system.fiber_metric if self.component == 1 else system.base_metric
        lip = 2 * np.pi * abs(self.k) if metric == "arc" else abs(self.k)
        return min(2.0, lip * delta)


@dataclass(frozen=True)
class SymbolAt:
    """Coordinate evaluation ``x(index)``; over ``torus_p`` this is ``e(x(index))`` and 0 at ``p``."""

    index: int = 0

    def at(self, system, pt):
        s = pt.symbol(self.index)
        if pt.alphabet == "binary":
            return complex(int(s))
        if pt.alphabet == "torus_p":
            return 0j if np.isnan(s) else complex(np.exp(2j * np.pi * s))
        raise TypeError("coordinate evaluation is defined for binary and torus_p symbols")

    def modulus(self, delta, system=None):
        alphabet = getattr(system, "alphabet", "binary")
        metric = getattr(system, "torus_metric", "arc")
        scale = 2.0 ** (abs(self.index) + 2)
        if alphabet == "binary":
            # d < 2^{-|i|-2} forces equal symbols at coordinate i
            return 0.0 if delta <= 1.0 / scale else 1.0
        lip = 2 * np.pi if metric == "arc" else 1.0
        return min(2.0, max(lip, 1.0) * scale * delta)

    def stream(self, x0, N, start=1):
        s = x0.span(start + self.index, start + self.index + N - 1)
        if x0.alphabet == "binary":
            return s.astype(np.complex128)
        return np.where(np.isnan(s), 0j, np.exp(2j * np.pi * np.nan_to_num(s)))


def orbit_observable(system, x0, f, N, start=1):
    """``(f(T^n x0))`` for ``n = start, ..., start + N - 1`` as a complex array."""
    N = int(N)
    if N < 1:
        raise ValueError("N must be positive")
    if hasattr(f, "orbit_values"):
        return f.orbit_values(system, x0, N, start)
    if isinstance(system, Rotation) and isinstance(f, CircleCharacter):
        return np.exp(2j * np.pi * f.k * system.orbit(x0, N, start))
    if isinstance(system, Skew) and isinstance(f, CircleCharacter) and not (
        isinstance(x0, ExtendedTorusPoint)
    ):
        xs, ys = system.orbit(x0, N, start)
        coord = ys if f.component == 1 else xs
        return np.exp(2j * np.pi * f.k * coord)
    if isinstance(system, Shift) and isinstance(f, SymbolAt):
        need = start + f.index + N - 1
        if x0.right < need:
            raise ValueError(
                f"window stores coordinates up to {x0.right}; {N} steps need radius >= {need}"
            )
        return f.stream(x0, N, start)
    x = system.iterate(x0, start)
    out = np.empty(N, dtype=np.complex128)
    for i in range(N):
        out[i] = f.at(system, x)
        if i + 1 < N:
            x = system.apply(x)
    return out


def orbit_points(system, x0, indices):
    """``[T^n x0 for n in indices]`` using closed forms where available."""
    return [system.iterate(x0, int(n)) for n in indices]
