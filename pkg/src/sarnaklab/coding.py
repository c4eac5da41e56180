"""Codings of orbits through sets with small boundary.

A point ``x`` is coded by ``x_hat(n) = 1`` when ``T^n x`` lies in ``U``. The
module tests boundary smallness, checks that close points have close
codings, compares covering numbers before and after coding, and builds the
continuous ``h`` that agrees with the indicator outside a collar of the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arith import harmonic_number
from .complexity import covering_number, mean_distance
from .systems import (
    CirclePoint,
    Product,
    ProductPoint,
    Rotation,
    SequenceSpec,
    Shift,
    Skew,
    SymbolWindow,
    circle_distance,
)


# -------------------------------------------------------------- states


def circle_states(system, x, ns):
    """Circle coordinates of ``T^n x`` for ``n`` in ``ns``, shape ``(len(ns), k)``."""
    ns = np.asarray(ns, dtype=np.float64)
    if isinstance(system, Rotation):
        return np.mod(x.t + ns * system.alpha, 1.0)[:, None]
    if isinstance(system, Skew):
        b, y = x.parts[0].t, x.parts[1].t
        return np.stack([np.full(ns.shape, b), np.mod(y + ns * b, 1.0)], axis=1)
    if isinstance(system, Product) and all(isinstance(f, Rotation) for f in system.factors):
        return np.stack([np.mod(p.t + ns * f.alpha, 1.0) for f, p in zip(system.factors, x.parts)], axis=1)
    raise TypeError(f"no circle coordinates for {type(system).__name__}")


def _metric(system, component):
    if isinstance(system, Rotation):
        return system.metric
    if isinstance(system, Skew):
        return system.fiber_metric if component == 1 else system.base_metric
    if isinstance(system, Product):
        return system.factors[component].metric
    return "arc"


# --------------------------------------------------------- codable sets


@dataclass(frozen=True)
class Arc:
    """Arc ``[a, b)`` of the circle coordinate ``component`` (wrapping when ``b < a``)."""

    a: float
    b: float
    component: int = 0

    def _coords(self, system, x, ns):
        return circle_states(system, x, ns)[:, self.component]

    def contains_t(self, t):
        a, b = self.a % 1.0, self.b % 1.0
        t = np.mod(t, 1.0)
        if a <= b:
            return (t >= a) & (t < b)
        return (t >= a) | (t < b)

    def boundary_distance_t(self, t, metric="arc"):
        return np.minimum(circle_distance(t, self.a, metric), circle_distance(t, self.b, metric))

    def signed_distance_t(self, t, metric="arc"):
        d = self.boundary_distance_t(t, metric)
        return np.where(self.contains_t(t), d, -d)

    def contains(self, system, x, ns):
        return self.contains_t(self._coords(system, x, ns))

    def boundary_distance(self, system, x, ns):
        return self.boundary_distance_t(self._coords(system, x, ns), _metric(system, self.component))

    def signed_distance(self, system, x, ns):
        return self.signed_distance_t(self._coords(system, x, ns), _metric(system, self.component))

    def boundary_points(self):
        return [(self.component, self.a % 1.0), (self.component, self.b % 1.0)]


@dataclass(frozen=True)
class Rectangle:
    """Product of arcs on distinct circle coordinates, under the max metric."""

    arcs: tuple

    def contains(self, system, x, ns):
        return np.logical_and.reduce([a.contains(system, x, ns) for a in self.arcs])

    def signed_distance(self, system, x, ns):
        s = np.stack([a.signed_distance(system, x, ns) for a in self.arcs])
        inside = np.all(s >= 0, axis=0)
        # inside: nearest exit through one face; outside: distance to the closure
        outside = np.where(s < 0, -s, 0.0).max(axis=0)
        return np.where(inside, s.min(axis=0), -outside)

    def boundary_distance(self, system, x, ns):
        return np.abs(self.signed_distance(system, x, ns))

    def boundary_points(self):
        return [bp for a in self.arcs for bp in a.boundary_points()]


@dataclass(frozen=True)
class Cylinder:
    """``{x : x(index) = symbol}`` in a binary shift; clopen, so its boundary is empty."""

    index: int = 0
    symbol: int = 1

    def contains(self, system, x, ns):
        ns = np.asarray(ns)
        return x.span(int(ns.min()) + self.index, int(ns.max()) + self.index)[
            ns - ns.min()
        ] == self.symbol

    def boundary_distance(self, system, x, ns):
        return np.full(np.shape(ns), np.inf)

    def signed_distance(self, system, x, ns):
        return np.where(self.contains(system, x, ns), np.inf, -np.inf)

    def boundary_points(self):
        return []


@dataclass(frozen=True)
class Whole:
    """The whole space: empty boundary."""

    def contains(self, system, x, ns):
        return np.ones(np.shape(ns), dtype=bool)

    def boundary_distance(self, system, x, ns):
        return np.full(np.shape(ns), np.inf)

    def signed_distance(self, system, x, ns):
        return np.full(np.shape(ns), np.inf)

    def boundary_points(self):
        return []


# ------------------------------------------------------------ smallness


@dataclass
class SmallnessReport:
    eps0: float
    N: int
    max_frequency: float
    max_log_frequency: float
    frequencies: np.ndarray


def smallness_test(system, U, eps0, N, trial_points):
    """Largest visit frequency of ``B(boundary U, eps0)`` over ``n in [0, N)`` among trial points.

    The logarithmic variant averages the same visits over ``n = 1..N`` with weights ``1/n``.
    """
    ns = np.arange(N)
    freqs, logs = [], []
    inv = 1.0 / np.arange(1, N + 1)
    M = harmonic_number(N)
    for x in trial_points:
        visits = U.boundary_distance(system, x, ns) < eps0
        freqs.append(visits.mean())
        hits = U.boundary_distance(system, x, np.arange(1, N + 1)) < eps0
        logs.append(math.fsum(inv[hits]) / M)
    freqs = np.asarray(freqs)
    return SmallnessReport(eps0, N, float(freqs.max()), float(max(logs)), freqs)


def code_point(system, U, x, lo, hi):
    """``x_hat(n)`` for ``n = lo..hi`` as an int8 array."""
    return U.contains(system, x, np.arange(lo, hi + 1)).astype(np.int8)


def coding_sequence(system, U, x, lo, hi):
    """The coding as a :class:`SequenceSpec` over ``{0, 1}``."""
    return SequenceSpec("binary", lo, code_point(system, U, x, lo, hi))


def disagreement_density(c1, c2):
    return float(np.count_nonzero(c1 != c2)) / len(c1)


# ------------------------------------------------------------- sampling


def random_point(system, rng):
    if isinstance(system, Rotation):
        return CirclePoint(rng.random())
    if isinstance(system, Skew):
        return system.point(system.frequencies.sample(rng, 1)[0], rng.random())
    if isinstance(system, Product):
        return ProductPoint([random_point(f, rng) for f in system.factors])
    raise TypeError(f"no sampler for {type(system).__name__}")


def perturb(system, x, r, rng):
    """A point whose distance from ``x`` is below ``r`` (and whose mean distance is too, for isometries)."""
    if isinstance(system, Rotation):
        return CirclePoint(x.t + rng.uniform(-r, r) * (1 / (2 * math.pi) if system.metric == "chord" else 1.0))
    if isinstance(system, Product):
        return ProductPoint([perturb(f, p, r, rng) for f, p in zip(system.factors, x.parts)])
    if isinstance(system, Skew):
        b, y = x.parts[0].t, x.parts[1].t
        return system.point(b, y + rng.uniform(-r, r) * 0.1)
    raise TypeError(f"no perturbation for {type(system).__name__}")


def _near_collar_pairs(system, U, eps0, r, rng, count):
    """Pairs straddling the collar edge: ``x`` at distance ``eps0 + s r`` from a boundary point, ``y`` moved ``0.999 r`` toward it."""
    bps = U.boundary_points()
    if not bps or not isinstance(system, Rotation):
        return []
    scale = 1 / (2 * math.pi) if system.metric == "chord" else 1.0
    pairs = []
    for _ in range(count):
        _, c = bps[rng.integers(len(bps))]
        side = 1 if rng.random() < 0.5 else -1
        off = eps0 + rng.random() * r
        pairs.append((CirclePoint(c + side * off), CirclePoint(c + side * (off - 0.999 * r * scale))))
    return pairs


def separation_holds(system, U, eps0, eps, rng, pairs=500):
    """Sampled check: points ``sqrt(eps)``-close to a collar-free point fall on the same side of ``U``."""
    r = math.sqrt(eps)
    xs = [random_point(system, rng) for _ in range(pairs)]
    candidates = [(x, perturb(system, x, r, rng)) for x in xs]
    candidates += _near_collar_pairs(system, U, eps0, r, rng, pairs)
    here = np.array([0])
    for x, y in candidates:
        if U.boundary_distance(system, x, here)[0] < eps0:
            continue
        if system.distance(x, y).value >= r:
            continue
        if bool(U.contains(system, y, here)[0]) != bool(U.contains(system, x, here)[0]):
            return False
    return True


# ------------------------------------------------------------ stability


@dataclass
class StabilityReport:
    delta: float
    N: int
    eps0: float = float("nan")
    eps: float = float("nan")
    smallness: float = float("nan")
    max_density: float = float("nan")
    pairs: int = 0
    passed: bool = False
    vacuous: bool = False
    inconclusive: bool = False
    notes: list = field(default_factory=list)


def choose_eps0(system, U, delta, N, trial_points, start=None, max_halvings=60):
    """Halve ``eps0`` until the boundary-collar visit frequency drops below ``delta``."""
    eps0 = delta if start is None else start
    for _ in range(max_halvings):
        rep = smallness_test(system, U, eps0, N, trial_points)
        if rep.max_frequency < delta:
            return eps0, rep.max_frequency
        eps0 /= 2
    raise RuntimeError("boundary collar never became small; U may not have small boundary")


def choose_eps(system, U, delta, eps0, rng, iterations=40):
    """Largest ``eps`` in ``(0, delta^2)`` (by log-bisection) passing the sampled separation check."""
    hi = delta**2
    if separation_holds(system, U, eps0, hi * 0.999, rng):
        return hi * 0.999
    lo = hi * 1e-30
    if not separation_holds(system, U, eps0, lo, rng):
        raise RuntimeError("separation fails even for tiny eps")
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        if separation_holds(system, U, eps0, mid, rng):
            lo = mid
        else:
            hi = mid
    return lo


def verify_coding_stability(system, U, delta, N, pair_count=100, seed=0, trial_count=64, max_tries=20):
    """Search ``eps`` as in the stability argument and measure coding disagreement on close pairs.

    Passes when every sampled pair with ``d_N(x1, x2) < eps`` has codings
    disagreeing on at most ``2 delta N`` of ``n in [0, N)``.
    """
    rep = StabilityReport(delta=float(delta), N=int(N))
    if delta >= 1:
        rep.passed = rep.vacuous = True
        rep.notes.append("delta >= 1: the bound 2 delta N exceeds N")
        return rep
    if delta <= 0:
        raise ValueError("delta must be positive")
    rng = np.random.default_rng(seed)
    trials = [random_point(system, rng) for _ in range(trial_count)]
    if not U.boundary_points():
        rep.eps0, rep.smallness = 1.0, 0.0
    else:
        rep.eps0, rep.smallness = choose_eps0(system, U, delta, N, trials)
    rep.eps = choose_eps(system, U, delta, rep.eps0, rng) if U.boundary_points() else 0.999 * delta**2
    ns = np.arange(N)
    worst = 0.0
    for _ in range(pair_count):
        for _ in range(max_tries):
            x1 = random_point(system, rng)
            x2 = perturb(system, x1, rep.eps, rng)
            if mean_distance(system, x1, x2, N)[0] < rep.eps:
                break
        else:
            rep.inconclusive = True
            rep.notes.append("could not sample a close pair")
            break
        c1 = U.contains(system, x1, ns)
        c2 = U.contains(system, x2, ns)
        worst = max(worst, disagreement_density(c1, c2))
        rep.pairs += 1
    rep.max_density = worst
    rep.passed = (not rep.inconclusive) and worst <= 2 * delta
    return rep


# -------------------------------------------------------------- transfer


@dataclass
class TransferReport:
    delta: float
    N: int
    L: int
    delta_prime: float
    eps: float
    coded_count: int
    original_count: int
    holds: bool
    sample_size: int
    coded_saturated: bool
    original_saturated: bool
    mapped_cover_ok: bool
    notes: list = field(default_factory=list)


def transfer_parameters(delta):
    """Smallest ``L`` with ``2/2^L < delta/2`` and ``delta'`` just inside ``4 delta' L + 2/2^L < delta``."""
    L = 1
    while 2.0 / 2**L >= delta / 2:
        L += 1
    delta_prime = 0.99 * (delta - 2.0 / 2**L) / (4 * L)
    return L, delta_prime


def complexity_transfer_check(system, U, delta, N, sample_size=512, seed=0, radius=12):
    """Compare greedy nets of codings (radius ``delta``) and of points (radius ``eps(delta')``)."""
    L, dp = transfer_parameters(delta)
    stab = verify_coding_stability(system, U, dp, N, pair_count=20, seed=seed)
    eps = stab.eps
    rng = np.random.default_rng(seed + 1)
    xs = [random_point(system, rng) for _ in range(sample_size)]
    original = covering_number(system, xs, N, eps)
    shift = Shift("binary", radius=radius)
    coded = [
        SymbolWindow("binary", code_point(system, U, x, -radius, N - 1 + radius), radius) for x in xs
    ]
    coded_net = covering_number(shift, coded, N, delta)
    # every sample is eps-close to an original centre; its coding should be delta-close to that centre's coding
    enc = shift.encode(coded, N)
    centers = original.net_indices
    d_orig = system.mean_distances(system.encode(xs, N), np.arange(sample_size), centers)
    nearest = np.argmin(d_orig, axis=1)
    d_code = shift.mean_distances(enc, np.arange(sample_size), centers)[np.arange(sample_size), nearest]
    mapped_ok = bool(np.all(d_code < delta + enc.tail))
    rep = TransferReport(
        delta=float(delta),
        N=int(N),
        L=L,
        delta_prime=dp,
        eps=eps,
        coded_count=coded_net.cardinality,
        original_count=original.cardinality,
        holds=coded_net.cardinality <= original.cardinality,
        sample_size=sample_size,
        coded_saturated=coded_net.saturated,
        original_saturated=original.saturated,
        mapped_cover_ok=mapped_ok,
    )
    if original.saturated:
        rep.notes.append("original-side net saturates the sample at this eps")
    return rep


# ------------------------------------------------------------ observables


@dataclass(frozen=True)
class Indicator:
    U: object

    def at(self, system, x):
        return complex(self.U.contains(system, x, np.array([0]))[0])

    def orbit_values(self, system, x, N, start=1):
        return self.U.contains(system, x, np.arange(start, start + N)).astype(np.complex128)

    def modulus(self, delta, system=None):
        return 1.0


@dataclass(frozen=True)
class Mollified:
    """``h = clip(1/2 + s / (2 eps0), 0, 1)`` with ``s`` the signed distance to the boundary of ``U``."""

    U: object
    eps0: float

    def _h(self, s):
        return np.clip(0.5 + s / (2 * self.eps0), 0.0, 1.0)

    def at(self, system, x):
        return complex(self._h(self.U.signed_distance(system, x, np.array([0])))[0])

    def orbit_values(self, system, x, N, start=1):
        return self._h(self.U.signed_distance(system, x, np.arange(start, start + N))).astype(np.complex128)

    def modulus(self, delta, system=None):
        return min(1.0, delta / (2 * self.eps0))


def mollify_indicator(system, U, eps0):
    """Continuous ``h`` equal to 1 on ``U`` minus the collar, 0 off ``U`` plus the collar, linear between."""
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    return Mollified(U, float(eps0))
