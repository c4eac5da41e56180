"""Adversarial block sequences and the lower-bound chain they are built for.

Given scales ``(H_i, N_i)`` and, for every ``n <= N_i``, a frequency (or a
nilpotent group element), the sequence ``y`` places the orbit block
``y(n+h) = e(phi + h alpha_{n,i})`` (or ``g_{n,i}^h x0``) after each selected
``n`` and the symbol ``p`` elsewhere. :func:`verify_lower_bound_chain` evaluates
every inequality that leads from a correlation assumption on the signal to a
logarithmic-average lower bound ``tau^2 / 100`` for ``signal(n) F(sigma^n y)``.

Two backends evaluate the chain. ``dense`` materialises the signal and ``y`` and
sums directly; it is for small scales. ``analytic`` works with closed forms
(digamma sums over arithmetic progressions) and accepts the astronomically
large scales the growth condition forces, for constant signals and zero
frequencies.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import mpmath
import numpy as np

from .arith import harmonic_number
from .nil import NilGroup
from .systems import SequenceSpec

BETAS = (0.0, 0.25, 0.5, 0.75)


def sigma_of(tau):
    return tau * tau / 200.0


# ---------------------------------------------------------------- specs


@dataclass(frozen=True, eq=False)
class BlockSpec:
    """Scales, per-``n`` block data and the selected block starts.

    Attributes:
        tau: Correlation threshold in (0, 1).
        scales: ``[(H_i, N_i), ...]``; entries may be ints or mpmath numbers.
        frequencies: Per scale, a scalar or an array indexed by ``n`` (length ``N_i + 1``).
        phases: Per scale, a scalar or array of phase offsets (default 0).
        group: NilGroup for the nil variant.
        elements: Per scale, one group element or an ``(N_i + 1, dim)`` array.
        x0: Base point in the group for the nil variant.
        selected: Per scale, the block starts ``S_i'``.
        heads: Per scale, ``floor(N_i^sigma)`` when known exactly.
    """

    tau: float
    scales: list
    frequencies: list | None = None
    phases: list | None = None
    group: NilGroup | None = None
    elements: list | None = None
    x0: np.ndarray | None = None
    selected: list | None = None
    heads: list | None = None

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if not self.scales:
            raise ValueError("at least one scale is needed")
        for H, N in self.scales:
            if H < 1 or N < 1:
                raise ValueError("scales must be positive")

    @property
    def sigma(self):
        return sigma_of(self.tau)

    def head(self, i):
        """``floor(N_i^sigma)``: block starts must exceed it."""
        if self.heads is not None and self.heads[i] is not None:
            return self.heads[i]
        return floor_power(self.scales[i][1], self.sigma)

    def frequency(self, i, n):
        f = 0.0 if self.frequencies is None else self.frequencies[i]
        return f if np.ndim(f) == 0 else f[n]

    def phase(self, i, n):
        f = 0.0 if self.phases is None else self.phases[i]
        return f if np.ndim(f) == 0 else f[n]

    def element(self, i, n):
        e = np.asarray(self.elements[i], float)
        return e if e.ndim == 1 else e[n]

    def with_selection(self, selected):
        return replace(self, selected=[list(map(int, s)) for s in selected])


def floor_power(N, sigma):
    """``floor(N^sigma)``, exact for integer ``N`` when ``1/sigma`` is an integer."""
    with mpmath.workdps(60):
        x = mpmath.power(mpmath.mpf(N), sigma)
        k = int(mpmath.floor(x)) if x < 1e30 else mpmath.floor(x)
    if isinstance(k, int) and isinstance(N, int):
        inv = 1 / sigma
        p = round(inv)
        if abs(inv - p) < 1e-9:
            while (k + 1) ** p <= N:
                k += 1
            while k**p > N:
                k -= 1
    return k


def growth_condition(tau, scales):
    """Per consecutive pair, whether ``H_i < sigma N_i^sigma < (sigma/10) H_{i+1}^sigma``."""
    s = sigma_of(tau)
    out = []
    with mpmath.workdps(60):
        for i, (H, N) in enumerate(scales):
            mid = s * mpmath.power(mpmath.mpf(N), s)
            ok = mpmath.mpf(H) < mid
            if i + 1 < len(scales):
                ok = ok and mid < s / 10 * mpmath.power(mpmath.mpf(scales[i + 1][0]), s)
            out.append(bool(ok))
    return out


def minimal_scales(tau, count, H1=1, slack=1.001):
    """Scales just satisfying the growth condition, starting from ``H_1``.

    ``N_i`` is defined as ``K_i^(1/sigma)`` with ``K_i`` the first integer above
    ``H_i / sigma`` (times ``slack``), so ``N_i^sigma = K_i`` and the head of
    scale ``i`` is exactly ``K_i``. Large values are mpmath numbers.

    Returns:
        (scales, heads)
    """
    s = sigma_of(tau)
    scales, heads = [], []
    H = mpmath.mpf(H1)
    with mpmath.workdps(60):
        for _ in range(count):
            K = mpmath.floor(H / s * slack) + 1
            inv = 1 / mpmath.mpf(s)
            p = int(mpmath.nint(inv))
            N = K**p if abs(inv - p) < 1e-9 else mpmath.power(K, inv)
            scales.append((_maybe_int(H), _maybe_int(N)))
            heads.append(_maybe_int(K))
            H = mpmath.floor(mpmath.power(10 * K * slack, 1 / mpmath.mpf(s))) + 1
    return scales, heads


def _maybe_int(x):
    if x < 10**15 and x == mpmath.floor(x):
        return int(x)
    return x


# ------------------------------------------------------------ selection


@dataclass(frozen=True)
class GappedSelection:
    subset: list
    mass: float
    target: float
    met: bool


def select_gapped_subset(S, gap, target=0.0):
    """Greedy left-to-right subset of ``S`` with pairwise gaps ``>= gap`` and its harmonic mass."""
    chosen = []
    for s in S:
        if not chosen or s - chosen[-1] >= gap:
            chosen.append(int(s))
    mass = math.fsum(1.0 / s for s in chosen)
    return GappedSelection(chosen, mass, float(target), mass > target)


# ------------------------------------------------------------- assembly


@dataclass(frozen=True)
class Block:
    """``y(start + j) = e(phi + j theta)`` for ``0 <= j < length`` (``theta``/``phi`` unused for nil)."""

    scale: int
    start: int
    length: int
    theta: float
    phi: float
    anchor: int

    @property
    def end(self):
        return self.start + self.length


@dataclass(frozen=True, eq=False)
class AssembledSequence:
    """``y(lo), ..., y(lo + len - 1)``; ``p`` is NaN (a NaN row for nil symbols)."""

    variant: str
    lo: int
    symbols: np.ndarray
    ledger: tuple

    @property
    def hi(self):
        return self.lo + self.symbols.shape[0] - 1

    def is_p(self):
        s = self.symbols
        return np.isnan(s) if s.ndim == 1 else np.isnan(s).any(axis=1)

    def values(self):
        """``F(sigma^m y)`` for every stored ``m``: the circle symbol, or ``e`` of the first coordinate."""
        s = self.symbols if self.symbols.ndim == 1 else self.symbols[:, 0]
        return np.where(np.isnan(s), 0j, np.exp(2j * np.pi * np.nan_to_num(s)))

    def to_sequence_spec(self):
        return SequenceSpec("torus_p" if self.variant == "fourier" else "nil_p", self.lo, self.symbols)


def assemble_sequence(spec, variant="fourier", lo=0, hi=None):
    """Place the blocks of every selected start; reject colliding blocks."""
    if variant not in ("fourier", "nil"):
        raise ValueError(f"unknown variant {variant!r}")
    if spec.selected is None:
        raise ValueError("spec has no selected block starts")
    blocks = []
    for i, starts in enumerate(spec.selected):
        H = int(spec.scales[i][0])
        for n in starts:
            theta = float(spec.frequency(i, n)) if variant == "fourier" else 0.0
            phi = float(spec.phase(i, n)) + theta
            blocks.append(Block(i, int(n) + 1, H, theta % 1.0, phi % 1.0, int(n)))
    blocks.sort(key=lambda b: b.start)
    for a, b in zip(blocks, blocks[1:]):
        if b.start < a.end:
            raise ValueError(f"blocks collide: start {a.anchor} (scale {a.scale}) and {b.anchor} (scale {b.scale})")
    if hi is None:
        hi = max([b.end - 1 for b in blocks] + [lo])
    size = hi - lo + 1
    if variant == "fourier":
        sym = np.full(size, np.nan)
    else:
        sym = np.full((size, spec.group.dim), np.nan)
    for b in blocks:
        a, e = max(b.start, lo), min(b.end, hi + 1)
        if a >= e:
            continue
        h = np.arange(a - b.anchor, e - b.anchor)
        if variant == "fourier":
            sym[a - lo : e - lo] = np.mod(float(spec.phase(b.scale, b.anchor)) + h * b.theta, 1.0)
        else:
            G = spec.group
            g = spec.element(b.scale, b.anchor)
            pts = G.mult(G.power(g, h.astype(float)), np.broadcast_to(spec.x0, (h.size, G.dim)))
            sym[a - lo : e - lo] = G.reduce(pts)[0]
    return AssembledSequence(variant, lo, sym, tuple(blocks))


# ------------------------------------------------------- property checks


@dataclass
class BlockCheck:
    start: int
    length: int
    theta: float
    phi: float
    max_error: float
    in_set: bool
    determined: bool

    tol: float

    @property
    def ok(self):
        return self.in_set and self.max_error <= self.tol


@dataclass
class PropertyStarReport:
    blocks: list
    lengths: list
    lengths_grow: bool
    passed: bool
    failures: list = field(default_factory=list)


def _runs(mask):
    """Maximal runs of True as ``(start, stop)`` index pairs."""
    m = np.concatenate([[False], mask, [False]]).astype(np.int8)
    d = np.diff(m)
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def check_property_star(y, C, tol=1e-9):
    """Recover blocks from the raw symbols and check their linear-phase form and frequencies.

    Each maximal run of non-``p`` symbols is one block; ``phi`` and ``theta``
    are solved from its first two symbols, all symbols are compared with
    ``e(phi + j theta)`` and ``theta`` must lie within ``tol`` of ``C``.
    """
    if y.variant != "fourier":
        raise ValueError("property (*) concerns circle-valued sequences")
    s = y.symbols
    checks, failures = [], []
    for a, b in _runs(~np.isnan(s)):
        run = s[a:b]
        phi = float(run[0])
        determined = run.size > 1
        theta = float((run[1] - run[0]) % 1.0) if determined else 0.0
        j = np.arange(run.size)
        err = np.abs(np.exp(2j * np.pi * run) - np.exp(2j * np.pi * (phi + j * theta))).max()
        in_set = (not determined) or float(C.distance(theta)) <= tol
        c = BlockCheck(int(a) + y.lo, int(b - a), theta, phi, float(err), bool(in_set), determined, tol)
        checks.append(c)
        if not c.ok:
            failures.append(c.start)
    lengths = [c.length for c in checks]
    grow = len(lengths) < 2 or lengths[-1] > lengths[0]
    return PropertyStarReport(checks, lengths, grow, not failures, failures)


@dataclass
class SupportReport:
    windows: list
    frequencies: list
    decreasing: bool


def gen_measure_support_check(y, windows):
    """Frequency of ``y(n-1) = p, y(n) != p`` over ``M < n <= N`` for each window."""
    p = y.is_p()
    freqs = []
    for M, N in windows:
        if M < y.lo or N > y.hi or N <= M:
            raise ValueError(f"window ({M}, {N}] outside the stored range")
        n = np.arange(M + 1, N + 1) - y.lo
        hits = p[n - 1] & ~p[n]
        freqs.append(float(hits.sum()) / (N - M))
    dec = all(b <= a for a, b in zip(freqs, freqs[1:]))
    return SupportReport(list(windows), freqs, dec)


def classify_window(y, center, t):
    """Place ``sigma^center y`` restricted to ``[-t, t]`` into the split classes.

    Returns ``("head_p", q)`` when the window is ``p`` on ``[-t, q)`` and block
    symbols on ``[q, t]``, ``("tail_p", q)`` for the mirror pattern, and
    ``("other", None)`` otherwise. An all-``p`` window is ``("tail_p", -t)``.
    """
    if center - t < y.lo or center + t > y.hi:
        raise ValueError("window outside the stored range")
    p = y.is_p()[center - t - y.lo : center + t + 1 - y.lo]
    if p.all():
        return "tail_p", -t
    if not p.any():
        return "head_p", -t
    change = np.flatnonzero(np.diff(p.astype(np.int8)))
    if change.size == 1:
        q = int(change[0]) + 1 - t
        return ("head_p", q) if p[0] else ("tail_p", q)
    return "other", None


# -------------------------------------------------------------- signals


@dataclass(frozen=True)
class ConstantSignal:
    """The signal ``n -> value``; ``0`` and ``1`` are the usual synthetic choices."""

    value: complex = 1.0

    def window(self, a, b):
        return np.full(b - a + 1, complex(self.value))


def _signal_window(signal, a, b):
    if hasattr(signal, "covers") and a < signal.lo:
        # values below the table start are never read by the chain
        pad = np.zeros(signal.lo - a, dtype=np.complex128)
        return np.concatenate([pad, _signal_window(signal, signal.lo, b)])
    if hasattr(signal, "window"):
        return np.asarray(signal.window(a, b), dtype=np.complex128)
    arr = np.asarray(signal)
    if a < 0 or b >= arr.shape[0]:
        raise ValueError(f"signal is too short: need indices {a}..{b}, have 0..{arr.shape[0] - 1}")
    return arr[a : b + 1].astype(np.complex128)


# ---------------------------------------------------------------- chain


@dataclass(frozen=True)
class Link:
    """One inequality of the chain at one scale."""

    scale: int
    name: str
    relation: str
    measured: float
    bound: float

    @property
    def margin(self):
        if self.relation in (">", ">="):
            return self.measured - self.bound
        return self.bound - self.measured

    @property
    def passed(self):
        m = self.margin
        return m > 0 or (m == 0 and self.relation in (">=", "<="))

    def row(self):
        return (self.scale, self.name, self.relation, self.measured, self.bound, self.margin, self.passed)


LINK_ORDER = (
    "scale_growth_lower",
    "scale_growth_upper",
    "threshold_average",
    "large_set_mass",
    "head_mass",
    "tail_set_mass",
    "gapped_mass",
    "block_sum",
    "block_sum_modulus",
    "reindex_error",
    "shifted_sum",
    "final_average",
)


@dataclass
class ChainReport:
    tau: float
    beta: float
    backend: str
    links: list
    beta_scan: dict
    selected: list | None = None
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(l.passed for l in self.links)

    @property
    def intermediate_passed(self):
        return all(l.passed for l in self.links if l.name != "final_average")

    @property
    def first_failure(self):
        for l in self.links:
            if not l.passed:
                return l.name, l.scale
        return None

    def link(self, name, scale):
        for l in self.links:
            if l.name == name and l.scale == scale:
                return l
        raise KeyError((name, scale))

    def final_values(self):
        return [l.measured for l in self.links if l.name == "final_average"]

    def rows(self):
        return [l.row() for l in self.links]

    def report(self):
        lines = [f"tau={self.tau:g} beta={self.beta:g} backend={self.backend}"]
        for l in self.links:
            flag = "pass" if l.passed else "FAIL"
            lines.append(
                f"  scale {l.scale} {l.name:<20} {float(l.measured):.6g} {l.relation} {float(l.bound):.6g}  [{flag}]"
            )
        return "\n".join(lines)


def _growth_links(spec, i, s):
    H, N = spec.scales[i]
    with mpmath.workdps(60):
        head = s * mpmath.power(mpmath.mpf(N), s)
        links = [Link(i, "scale_growth_lower", "<", float(mpmath.log(H / head)), 0.0)]
        if i + 1 < len(spec.scales):
            nxt = s / 10 * mpmath.power(mpmath.mpf(spec.scales[i + 1][0]), s)
            links.append(Link(i, "scale_growth_upper", "<", float(mpmath.log(head / nxt)), 0.0))
    return links


def verify_lower_bound_chain(spec, signal, variant="fourier", backend="auto", beta=None):
    """Evaluate every inequality of the chain at every scale.

    Args:
        spec: BlockSpec; ``selected`` is ignored and recomputed.
        signal: A :class:`ConstantSignal`, a MobiusTable, or an array indexed by ``n``.
        variant: ``fourier`` (frequencies) or ``nil`` (group elements).
        backend: ``dense``, ``analytic`` or ``auto`` (analytic for constant signals on huge scales).
        beta: Fixed rotation in quarter turns; by default all four are scanned and the
            one with the largest worst-scale threshold margin is kept.

    Returns:
        ChainReport. Scale-growth links report the logarithm of the ratio of the two sides;
        mass and sum links are divided by ``M_i`` (``gapped_mass`` by ``M_i / H_i``).
    """
    if backend == "auto":
        big = max(float(mpmath.mpf(N)) for _, N in spec.scales) > 5e6
        backend = "analytic" if big else "dense"
    if backend == "dense":
        return _DenseChain(spec, signal, variant).run(beta)
    if backend == "analytic":
        return _AnalyticChain(spec, signal, variant).run(beta)
    raise ValueError(f"unknown backend {backend!r}")


def _pick_beta(averages, tau, beta):
    scan = {b: averages(b) for b in BETAS}
    if beta is None:
        beta = max(BETAS, key=lambda b: (min(v - tau for v in scan[b]), -b))
    elif beta not in scan:
        scan[beta] = averages(beta)
    return beta, {b: [float(v) for v in vals] for b, vals in scan.items()}


def _per_n(values, i, N):
    """Per-scale data for ``n = 1..N`` as an array (scalars broadcast, ``None`` is zero)."""
    if values is None or np.ndim(values[i]) == 0:
        return np.full(N, 0.0 if values is None else float(values[i]))
    return np.asarray(values[i], float)[1 : N + 1]


class _DenseChain:
    def __init__(self, spec, signal, variant):
        self.spec, self.signal, self.variant = spec, signal, variant
        self.tau, self.s = spec.tau, spec.sigma
        last = max(int(H) + int(N) for H, N in spec.scales)
        if last > 20_000_000:
            raise ValueError("scales too large for the dense backend")
        self.mu = _signal_window(signal, 0, last + 1)
        self._block = [self._block_averages(i) for i in range(len(spec.scales))]

    def _F(self, i, N, H):
        """``F(g_{n,i}^h x0)`` as an ``(N, H)`` array for ``n = 1..N``."""
        h = np.arange(1, H + 1, dtype=float)
        spec = self.spec
        if self.variant == "fourier":
            alpha = _per_n(spec.frequencies, i, N)
            phase = _per_n(spec.phases, i, N)
            return np.exp(2j * np.pi * (phase[:, None] + h[None, :] * alpha[:, None]))
        G = spec.group
        els = np.asarray(spec.elements[i], float)
        g = np.broadcast_to(els, (N, G.dim)) if els.ndim == 1 else els[1 : N + 1]
        pts = G.mult(G.power(g[:, None, :], h[None, :]), np.broadcast_to(spec.x0, (N, H, G.dim)))
        return np.exp(2j * np.pi * G.reduce(pts)[0][..., 0])

    def _block_averages(self, i):
        H, N = (int(v) for v in self.spec.scales[i])
        win = np.lib.stride_tricks.sliding_window_view(self.mu[2 : N + H + 1], H)
        return (win * self._F(i, N, H)).mean(axis=1)

    def run(self, beta):
        spec, tau, s = self.spec, self.tau, self.s

        def averages(b):
            rot = cmath.exp(2j * math.pi * b)
            out = []
            for i, (H, N) in enumerate(spec.scales):
                vals = np.maximum((rot * self._block[i]).real, 0.0)
                out.append(math.fsum(vals / np.arange(1, int(N) + 1)) / harmonic_number(int(N)))
            return out

        beta, scan = _pick_beta(averages, tau, beta)
        rot = cmath.exp(2j * math.pi * beta)
        links, selections = [], []
        for i, (H, N) in enumerate(spec.scales):
            H, N = int(H), int(N)
            n = np.arange(1, N + 1)
            M = harmonic_number(N)
            re = (rot * self._block[i]).real
            S = n[re > tau / 2]
            head = spec.head(i)
            tail = S[S > head]
            sel = select_gapped_subset(tail.tolist(), 2 * H, tau * M / (8 * H))
            selections.append(sel.subset)
            links += _growth_links(spec, i, s)
            links += [
                Link(i, "threshold_average", ">", scan[beta][i], tau),
                Link(i, "large_set_mass", ">", math.fsum(1.0 / S) / M, tau / 2),
                Link(i, "head_mass", "<", harmonic_number(int(head)) / M if head >= 1 else 0.0, 2 * s),
                Link(i, "tail_set_mass", ">", math.fsum(1.0 / tail) / M, tau / 4),
                Link(i, "gapped_mass", ">", H * sel.mass / M, tau / 8),
            ]
        self.selected = selections
        y = assemble_sequence(spec.with_selection(selections), self.variant, lo=0)
        Fy = np.zeros(self.mu.size, dtype=np.complex128)
        vals = y.values()
        Fy[: min(vals.size, Fy.size)] = vals[: Fy.size]
        prod = self.mu * Fy
        for i, (H, N) in enumerate(spec.scales):
            H, N = int(H), int(N)
            M = harmonic_number(N)
            starts = np.asarray(selections[i], dtype=np.int64)
            h = np.arange(1, H + 1)
            if starts.size:
                idx = starts[:, None] + h[None, :]
                inner = prod[idx]
                by_start = (inner.sum(axis=1) / starts).sum()
                by_point = (inner / idx).sum()
            else:
                by_start = by_point = 0j
            m = np.arange(1, N + 1)
            final = abs((prod[1 : N + 1] / m).sum()) / M
            links += [
                Link(i, "block_sum", ">", (rot * by_start).real / M, tau**2 / 16),
                Link(i, "block_sum_modulus", ">", abs(by_start) / M, tau**2 / 16),
                Link(i, "reindex_error", "<=", abs(by_start - by_point) / M, tau**2 / 32),
                Link(i, "shifted_sum", ">=", abs(by_point) / M, tau**2 / 32),
                Link(i, "final_average", ">=", final, tau**2 / 100),
            ]
        links.sort(key=lambda l: (l.scale, LINK_ORDER.index(l.name)))
        return ChainReport(tau, beta, "dense", links, scan, selections)


class _AnalyticChain:
    """Closed forms for a constant signal ``c`` with zero frequencies, so every block symbol is ``1``.

    Every block average equals ``c``; ``S_i`` is all of ``[1, N_i]`` or empty;
    ``S_i'`` is the progression ``a, a + 2H, ...`` up to ``N_i`` with ``a`` the
    first integer above ``N_i^sigma``. Sums over ``S_i'`` are digamma
    differences. Quantities that would cancel catastrophically are bracketed
    and the conservative end is reported.
    """

    EXACT_H = 2000

    def __init__(self, spec, signal, variant):
        if not isinstance(signal, ConstantSignal):
            raise TypeError("the analytic backend needs a ConstantSignal")
        if variant == "fourier":
            zero = spec.frequencies is None or all(np.ndim(f) == 0 and f == 0 for f in spec.frequencies)
            zero = zero and (spec.phases is None or all(np.ndim(f) == 0 and f == 0 for f in spec.phases))
        else:
            zero = spec.elements is not None and all(
                np.ndim(e) == 1 and e[0] == 0 for e in spec.elements
            ) and spec.x0 is not None and spec.x0[0] == 0
        if not zero:
            raise ValueError("the analytic backend needs blocks of constant symbol value 1")
        self.spec, self.c = spec, complex(signal.value)

    def run(self, beta, dps=60):
        spec, tau, s, c = self.spec, self.spec.tau, self.spec.sigma, self.c
        with mpmath.workdps(dps):
            beta, scan = _pick_beta(
                lambda b: [max((cmath.exp(2j * math.pi * b) * c).real, 0.0)] * len(spec.scales), tau, beta
            )
            r = (cmath.exp(2j * math.pi * beta) * c).real
            links, progs, prev = [], [], mpmath.mpf(0)
            for i, (H, N) in enumerate(spec.scales):
                H, N = mpmath.mpf(H), mpmath.mpf(N)
                M = mpmath.harmonic(N)
                head = mpmath.mpf(spec.head(i))
                head_mass = mpmath.harmonic(head)
                big = r > tau / 2
                S_mass = M if big else mpmath.mpf(0)
                tail_mass = M - head_mass if big else mpmath.mpf(0)
                a, d = head + 1, 2 * H
                count = mpmath.floor((N - a) / d) + 1 if big and a <= N else mpmath.mpf(0)
                P1, lo_Q, hi_Q = self._progression(a, d, count, H)
                E_hi = H * P1 - lo_Q
                if i + 1 < len(spec.scales):
                    nxt_start = mpmath.mpf(spec.head(i + 1)) + 1
                    if nxt_start <= N + H:
                        raise ValueError("scales overlap; the analytic backend needs separated scales")
                overflow = self._overflow(a, d, count, H, N)
                final_lo = abs(c) * (prev + lo_Q - overflow) / M
                prev += lo_Q
                links += _growth_links(spec, i, s)
                links += [
                    Link(i, "threshold_average", ">", scan[beta][i], tau),
                    Link(i, "large_set_mass", ">", float(S_mass / M), tau / 2),
                    Link(i, "head_mass", "<", float(head_mass / M), 2 * s),
                    Link(i, "tail_set_mass", ">", float(tail_mass / M), tau / 4),
                    Link(i, "gapped_mass", ">", float(H * P1 / M), tau / 8),
                    Link(i, "block_sum", ">", float(r * H * P1 / M), tau**2 / 16),
                    Link(i, "block_sum_modulus", ">", float(abs(c) * H * P1 / M), tau**2 / 16),
                    Link(i, "reindex_error", "<=", float(abs(c) * E_hi / M), tau**2 / 32),
                    Link(i, "shifted_sum", ">=", float(abs(c) * lo_Q / M), tau**2 / 32),
                    Link(i, "final_average", ">=", float(final_lo), tau**2 / 100),
                ]
                progs.append((a, d, count))
        rep = ChainReport(tau, beta, "analytic", links, scan, None)
        rep.progressions = progs
        return rep

    @staticmethod
    def _overflow(a, d, count, H, N):
        """Mass of the last block beyond ``N``; bounded by ``H/N`` when ``N`` is huge."""
        if count == 0:
            return mpmath.mpf(0)
        last = a + d * (count - 1) + H
        if last <= N:
            return mpmath.mpf(0)
        if N < mpmath.mpf(10) ** 40:
            return mpmath.harmonic(last) - mpmath.harmonic(N)
        return H / N

    def _progression(self, a, d, count, H):
        """``sum 1/n`` over the progression and a bracket for ``sum_n sum_{h<=H} 1/(n+h)``."""
        if count == 0:
            z = mpmath.mpf(0)
            return z, z, z
        P1 = ap_power_sum(a, d, count, 1)
        if H <= self.EXACT_H and a < mpmath.mpf(10) ** 40:
            Q = mpmath.fsum(ap_power_sum(a + h, d, count, 1) for h in range(1, int(H) + 1))
            return P1, Q, Q
        # h/(n(n+h)) lies in [h/n^2 - h^2/n^3, h/n^2]
        P2 = ap_power_sum(a, d, count, 2)
        P3 = ap_power_sum(a, d, count, 3)
        E_hi = H * (H + 1) / 2 * P2
        E_lo = E_hi - H * (H + 1) * (2 * H + 1) / 6 * P3
        return P1, H * P1 - E_hi, H * P1 - E_lo


def ap_power_sum(a, d, count, k):
    """``sum_{j<count} (a + j d)^(-k)`` through polygamma differences."""
    x = mpmath.mpf(a) / d
    if k == 1:
        return (mpmath.digamma(x + count) - mpmath.digamma(x)) / d
    sign = (-1) ** k
    return sign * (mpmath.polygamma(k - 1, x) - mpmath.polygamma(k - 1, x + count)) / (
        mpmath.factorial(k - 1) * mpmath.mpf(d) ** k
    )
