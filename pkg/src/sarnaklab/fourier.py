"""Restricted Fourier-uniformity sums, box dimension and the Vitali covering step."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arith import AverageKind, sieve_mobius, weighted_average


@dataclass(frozen=True, eq=False)
class FrequencySet:
    """A compact set of frequencies in [0, 1].

    ``finite`` holds explicit points. ``cantor`` holds the ``2**level`` left
    endpoints of the level-``level`` intervals of the middle Cantor
    construction with ratio ``r``; ``analytic_dim`` is the box dimension of
    the limit set, which bounds its packing dimension. ``grid`` stands for
    the whole interval [0, 1] and is sampled with spacing ``step``.
    """

    kind: str
    points: np.ndarray
    step: float = 0.0
    ratio: float = 0.0
    level: int = 0
    analytic_dim: float | None = None

    @classmethod
    def finite(cls, alphas):
        pts = np.unique(np.asarray(alphas, dtype=float))
        if pts.size == 0:
            raise ValueError("frequency set is empty")
        if pts.min() < 0 or pts.max() > 1:
            raise ValueError("frequencies must lie in [0, 1]")
        return cls("finite", pts, analytic_dim=0.0)

    @classmethod
    def cantor(cls, r, level):
        if not 0 < r < 0.5:
            raise ValueError("ratio must lie in (0, 1/2)")
        if level < 0:
            raise ValueError("level must be nonnegative")
        left = np.zeros(1)
        for k in range(level):
            left = np.concatenate([left, left + (1 - r) * r**k])
        return cls(
            "cantor", np.sort(left), ratio=r, level=level,
            analytic_dim=math.log(2) / math.log(1 / r),
        )

    @classmethod
    def grid(cls, step):
        if not 0 < step <= 1:
            raise ValueError("step must lie in (0, 1]")
        return cls("grid", _unit_grid(step), step=step, analytic_dim=1.0)

    @property
    def is_continuum(self):
        return self.kind == "grid"

    def intervals(self):
        """Closed intervals whose union is the represented set (points are degenerate intervals)."""
        if self.kind == "grid":
            return np.array([[0.0, 1.0]])
        if self.kind == "cantor":
            return np.stack([self.points, self.points + self.ratio**self.level], axis=1)
        return np.stack([self.points, self.points], axis=1)

    def descriptor(self):
        if self.kind == "cantor":
            return f"cantor(r={self.ratio:g},L={self.level})"
        if self.kind == "grid":
            return "interval[0,1]"
        return f"finite({self.points.size})"

    def evaluation_points(self, eta):
        """Points where the supremum is evaluated and the covering radius they leave."""
        if self.kind == "grid":
            spacing = min(self.step, eta)
            return _unit_grid(spacing), spacing / 2
        return self.points, 0.0

    def distance(self, theta):
        """Circle distance from ``theta`` to the nearest represented frequency."""
        if self.kind == "grid":
            return 0.0
        d = np.mod(np.asarray(theta, dtype=float)[..., None] - self.points, 1.0)
        return np.minimum(d, 1 - d).min(axis=-1)

    def sample(self, rng, size):
        if self.kind == "grid":
            return rng.random(size)
        return rng.choice(self.points, size=size)


def _unit_grid(spacing):
    count = math.ceil(1.0 / spacing)
    return np.linspace(0.0, 1.0, count + 1)


def default_refinement(H):
    """Spacing whose Lipschitz slack is 0.01."""
    return 0.01 / (math.pi * (H + 1))


@dataclass(frozen=True)
class FourierSup:
    """Grid maximum of ``S(alpha)`` and a certified upper bound for the supremum over the set."""

    lower: float
    upper: float
    argmax: float


def _phase_matrices(H, alphas):
    h = np.arange(1, H + 1)[:, None]
    ang = 2 * np.pi * np.mod(h * alphas[None, :], 1.0)
    return np.cos(ang), np.sin(ang)


def _window_sups(windows, cos, sin):
    re = windows @ cos
    im = windows @ sin
    mag = np.hypot(re, im)
    return mag.max(axis=1), mag.argmax(axis=1)


def local_fourier_sup(mob, n, H, C, refinement=None):
    """``sup_{alpha in C} |(1/H) sum_{h<=H} mob(n+h) e(h alpha)|``.

    Args:
        mob: A :class:`MobiusTable`, or any 1-D array indexed so that
            ``mob[m]`` is the value at ``m``.
        n: Window offset; the window is ``n+1..n+H``.
        H: Window length.
        C: FrequencySet.
        refinement: Spacing for continuum sets (default gives slack 0.01).

    Returns:
        FourierSup with ``upper - lower <= pi (H+1) eta``.
    """
    H = int(H)
    if H < 1:
        raise ValueError("H must be positive")
    window = _window(mob, n + 1, n + H)
    eta = default_refinement(H) if refinement is None else refinement
    alphas, radius = C.evaluation_points(eta)
    if alphas.size == 0:
        raise ValueError("frequency set is empty")
    cos, sin = _phase_matrices(H, alphas)
    best, arg = _window_sups(window[None, :] / H, cos, sin)
    slack = math.pi * (H + 1) * radius
    return FourierSup(float(best[0]), float(best[0]) + slack, float(alphas[arg[0]]))


def _window(mob, a, b):
    if hasattr(mob, "window"):
        return mob.window(a, b).astype(np.float64)
    arr = np.asarray(mob, dtype=np.float64)
    if a < 0 or b >= arr.shape[0]:
        raise ValueError(f"sequence does not cover [{a}, {b}]")
    return arr[a : b + 1]


def fourier_sup_profile(mob, N, H, C, refinement=None, chunk=1 << 14):
    """Per-``n`` grid maxima of ``S`` for ``n = 1..N`` and the common slack."""
    H, N = int(H), int(N)
    seq = _window(mob, 2, N + H)
    eta = default_refinement(H) if refinement is None else refinement
    alphas, radius = C.evaluation_points(eta)
    cos, sin = _phase_matrices(H, alphas)
    windows = np.lib.stride_tricks.sliding_window_view(seq, H)
    out = np.empty(N)
    step = max(1, min(chunk, (1 << 24) // max(alphas.size, 1)))
    for s in range(0, N, step):
        out[s : s + step] = _window_sups(windows[s : s + step] / H, cos, sin)[0]
    return out, math.pi * (H + 1) * radius


@dataclass(frozen=True)
class UniformityAverage:
    H: int
    N: int
    kind: str
    descriptor: str
    lower: float
    upper: float

    def row(self):
        return (self.H, self.N, self.kind, self.descriptor, self.lower, self.upper)


def restricted_uniformity_average(N, H, C, kind=AverageKind.LOGARITHMIC, table=None, refinement=None):
    """Cesàro or logarithmic average over ``n <= N`` of the local Fourier supremum.

    ``lower`` averages the grid maxima, ``upper`` adds the Lipschitz slack.
    """
    kind = AverageKind(kind)
    if table is None or not table.covers(1, N + H):
        table = sieve_mobius(1, N + H)
    sups, slack = fourier_sup_profile(table, N, H, C, refinement)
    value = weighted_average(sups, N, kind).real
    return UniformityAverage(int(H), int(N), kind.value, C.descriptor(), value, value + slack)


# ------------------------------------------------------------ dimension


def cover_count(intervals, eps, rtol=1e-9):
    """Minimal number of closed intervals of length ``eps`` covering a finite union of closed intervals."""
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    iv = iv[np.argsort(iv[:, 0], kind="stable")]
    reach = eps * (1 + rtol)
    count, covered_to, i = 0, -np.inf, 0
    while i < iv.shape[0]:
        a, b = iv[i]
        if b <= covered_to:
            i += 1
            continue
        start = max(a, covered_to)
        # a run of length (b - start) needs ceil(.) intervals; the last may reach further
        k = max(1, math.ceil((b - start) / reach - rtol))
        count += k
        covered_to = start + k * reach
        i += 1
    return count


@dataclass(frozen=True)
class BoxDimension:
    slope: float
    eps: tuple
    counts: tuple
    degenerate: bool = False
    note: str = "box dimension bounds the packing dimension from above"


def box_dimension_estimate(S, eps_grid):
    """Least-squares slope of ``log N_eps`` against ``-log eps``."""
    eps = np.asarray(eps_grid, dtype=float)
    if eps.size < 4:
        raise ValueError("need at least 4 scales")
    intervals = S.intervals() if isinstance(S, FrequencySet) else np.repeat(
        np.asarray(S, dtype=float)[:, None], 2, axis=1
    )
    counts = np.array([cover_count(intervals, e) for e in eps])
    if np.all(counts == 1):
        return BoxDimension(0.0, tuple(eps), tuple(counts.tolist()), True)
    slope = float(np.polyfit(-np.log(eps), np.log(counts), 1)[0])
    return BoxDimension(slope, tuple(eps), tuple(counts.tolist()))


# --------------------------------------------------------------- Vitali


@dataclass(frozen=True)
class VitaliResult:
    selected: tuple
    disjoint: bool
    covered: bool

    def balls(self, balls):
        return [balls[i] for i in self.selected]


def _disjoint(b1, b2):
    return abs(b1[0] - b2[0]) >= b1[1] + b2[1]


def vitali_5r_subfamily(balls):
    """Greedy disjoint subfamily whose 5-fold inflations cover every input ball.

    Balls are open intervals ``(center - r, center + r)``; larger radii are
    taken first, ties broken by lowest index.
    """
    order = sorted(range(len(balls)), key=lambda i: (-balls[i][1], i))
    chosen = []
    for i in order:
        if all(_disjoint(balls[i], balls[j]) for j in chosen):
            chosen.append(i)
    disjoint = all(
        _disjoint(balls[a], balls[b]) for k, a in enumerate(chosen) for b in chosen[k + 1 :]
    )
    covered = all(
        any(
            not _disjoint(balls[i], balls[j]) and balls[j][1] >= balls[i][1]
            and abs(balls[i][0] - balls[j][0]) + balls[i][1] <= 5 * balls[j][1]
            for j in chosen
        )
        for i in range(len(balls))
    )
    return VitaliResult(tuple(sorted(chosen)), disjoint, covered)
