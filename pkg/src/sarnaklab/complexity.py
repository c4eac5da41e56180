"""Mean-metric covering numbers, growth profiles and the disjointness certificate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .arith import harmonic_number, sieve_mobius
from .systems import CircleCharacter, CirclePoint, Rotation, orbit_observable


def mean_distance(system, x, y, n):
    """``(1/n) sum_{i<n} d(T^i x, T^i y)``; returns the value and the truncation bound."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    enc = system.encode([x, y], n)
    return float(system.mean_distances(enc, [0], [1])[0, 0]), enc.tail


@dataclass
class CoveringReport:
    """Greedy ``epsilon``-net under the mean metric ``d_n``.

    ``cardinality`` upper-bounds the covering number of the sample at radius
    ``epsilon``. The centres are pairwise at distance ``>= epsilon``, so the
    same number lower-bounds the covering number at radius ``epsilon / 2``.
    For measure covers only the upper bound is claimed.
    """

    n: int
    epsilon: float
    net: list
    net_indices: np.ndarray
    cardinality: int
    sample_size: int
    tail_bound: float
    direction: str = "upper_bound"
    measure: bool = False
    covered_mass: float = 1.0
    degenerate: bool = False
    note: str = ""

    @property
    def saturated(self):
        return self.cardinality >= self.sample_size

    @property
    def packing_lower_bound_radius(self):
        return None if self.measure else self.epsilon / 2

    def statements(self):
        tail = f" (up to truncation {self.tail_bound:.3g})" if self.tail_bound else ""
        lines = [
            f"S_{self.n}(sample, eps={self.epsilon:g}) <= {self.cardinality}{tail}"
        ]
        if not self.measure:
            lines.append(f"S_{self.n}(sample, eps={self.epsilon / 2:g}) >= {self.cardinality}")
        return lines


def _check_eps(epsilon):
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")


def covering_number(system, sample, n, epsilon, batch=256):
    """Greedy sequential net: a sample opens a centre when it is ``>= epsilon`` from all centres.

    Args:
        system: Any system from :mod:`sarnaklab.systems`.
        sample: Nonempty list of points.
        n: Orbit length of the mean metric.
        epsilon: Ball radius (open balls).
        batch: Samples whose distances to the current centres are computed together.

    Returns:
        CoveringReport
    """
    _check_eps(epsilon)
    if not sample:
        raise ValueError("sample is empty")
    enc = system.encode(list(sample), int(n))
    size = len(sample)
    centers = [0]
    for start in range(1, size, batch):
        idx = np.arange(start, min(start + batch, size))
        near = system.mean_distances(enc, idx, np.asarray(centers)).min(axis=1) < epsilon
        first_new = len(centers)
        for i, covered in zip(idx.tolist(), near.tolist()):
            if covered:
                continue
            fresh = centers[first_new:]
            if fresh and system.mean_distances(enc, [i], np.asarray(fresh)).min() < epsilon:
                continue
            centers.append(i)
    centers = np.asarray(centers)
    return CoveringReport(
        n=int(n),
        epsilon=float(epsilon),
        net=[sample[i] for i in centers],
        net_indices=centers,
        cardinality=len(centers),
        sample_size=size,
        tail_bound=enc.tail,
    )


def ball_matrix(system, enc, size, epsilon, rows=None):
    """Boolean matrix ``B[i, j] = d_n(x_i, x_j) < epsilon`` over ``size`` encoded points."""
    rows = np.arange(size) if rows is None else np.asarray(rows)
    out = np.empty((rows.size, size), dtype=bool)
    step = max(1, (1 << 21) // size)
    within = getattr(system, "within", None)
    for s in range(0, rows.size, step):
        if within is not None:
            out[s : s + step] = within(enc, rows[s : s + step], np.arange(size), epsilon)
        else:
            out[s : s + step] = system.mean_distances(enc, rows[s : s + step], np.arange(size)) < epsilon
    return out


def measure_covering_number(system, weighted_sample, n, epsilon):
    """Greedy mass cover of an empirical measure under ``d_n``.

    Centres are sample points; each step adds the point whose open
    ``epsilon``-ball carries the most uncovered mass (lowest index on ties)
    until the covered mass exceeds ``1 - epsilon``.

    Args:
        weighted_sample: List of ``(point, weight)`` with weights summing to 1.
    """
    _check_eps(epsilon)
    points = [p for p, _ in weighted_sample]
    w = np.array([float(wt) for _, wt in weighted_sample])
    if not points:
        raise ValueError("sample is empty")
    if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("weights must be nonnegative and sum to 1")
    enc = system.encode(points, int(n))
    if epsilon >= 1:
        return CoveringReport(
            int(n), float(epsilon), [points[0]], np.array([0]), 1, len(points), enc.tail,
            measure=True, covered_mass=0.0, degenerate=True,
            note="epsilon >= 1: the mass condition is vacuous",
        )
    balls = ball_matrix(system, enc, len(points), epsilon)
    covered = np.zeros(len(points), dtype=bool)
    gain = balls.astype(np.float64) @ w
    centers, mass = [], 0.0
    while mass <= 1 - epsilon:
        c = int(np.argmax(gain))
        centers.append(c)
        newly = balls[c] & ~covered
        covered |= newly
        gain -= balls[:, newly].astype(np.float64) @ w[newly]
        mass = math.fsum(w[covered])
    centers = np.asarray(centers)
    return CoveringReport(
        n=int(n),
        epsilon=float(epsilon),
        net=[points[i] for i in centers],
        net_indices=centers,
        cardinality=len(centers),
        sample_size=len(points),
        tail_bound=enc.tail,
        measure=True,
        covered_mass=mass,
    )


# ------------------------------------------------------------- profiles


@dataclass
class ComplexityProfile:
    epsilon: float
    grid: list
    counts: list
    fitted_exponent: float
    fit_r2: float
    classification: str
    semilog_r2: float = float("nan")
    convexity: float = 0.0
    degenerate: bool = False
    notes: list = field(default_factory=list)

    def rows(self):
        return [(self.epsilon, n, c) for n, c in zip(self.grid, self.counts)]


def _linear_fit(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), r2


def classify_growth(grid, counts):
    """Least-squares growth fit and classification of a covering-count profile.

    Returns ``(slope, r2, semilog_r2, convexity, label, notes)``.
    """
    n = np.asarray(grid, dtype=float)
    c = np.asarray(counts, dtype=float)
    notes = []
    if n.size < 4:
        raise ValueError("profile grid needs at least 4 points")
    x, y = np.log(n), np.log(c)
    slope, r2 = _linear_fit(x, y)
    _, semilog_r2 = _linear_fit(n, y)
    convexity = float(np.polyfit(x, y, 2)[0])
    if np.all(c == c[0]):
        notes.append("constant counts")
    if slope < 0.1:
        label = "bounded"
    elif slope < 0.9:
        label = "sublinear"
    elif convexity > 0 and semilog_r2 > r2:
        label = "superpolynomial"
    elif r2 >= 0.95:
        label = "polynomial"
    else:
        label = "unclassified"
        notes.append(f"degenerate fit: slope {slope:.3f}, R^2 {r2:.3f}")
    return slope, r2, semilog_r2, convexity, label, notes


def complexity_profile(system, sampler, epsilon, n_grid):
    """Covering counts along ``n_grid`` and their growth classification.

    Args:
        sampler: Either a list of points used for every ``n`` or a callable
            ``n -> list of points`` (needed for shifts, whose windows must be
            long enough for ``n`` steps).
        n_grid: At least four increasing orbit lengths.

    The grid is finite, so the report cannot separate lim inf from lim sup
    behaviour; all counts are returned.
    """
    grid = [int(n) for n in n_grid]
    if len(grid) < 4:
        raise ValueError("profile grid needs at least 4 points")
    counts, notes = [], []
    for n in grid:
        sample = sampler(n) if callable(sampler) else sampler
        rep = covering_number(system, sample, n, epsilon)
        counts.append(rep.cardinality)
        if rep.saturated:
            notes.append(f"n={n}: net saturates the sample ({rep.cardinality})")
    slope, r2, semi, convex, label, fit_notes = classify_growth(grid, counts)
    return ComplexityProfile(
        epsilon=float(epsilon),
        grid=grid,
        counts=counts,
        fitted_exponent=slope,
        fit_r2=r2,
        classification=label,
        semilog_r2=semi,
        convexity=convex,
        degenerate=label == "unclassified",
        notes=notes + fit_notes,
    )


def power_law_exponent(grid, values):
    """Least-squares slope of ``log values`` against ``log grid`` and its R^2."""
    return _linear_fit(np.log(np.asarray(grid, float)), np.log(np.asarray(values, float)))


# ---------------------------------------------------------- certificate


def observable_modulus(system, f, delta):
    """Upper bound on ``|f(a) - f(b)|`` over ``d(a, b) < delta`` for built-in observables."""
    return float(f.modulus(delta, system))


def choose_epsilon1(system, f, epsilon, iterations=80):
    """Largest ``e1`` below ``epsilon**2`` (by bisection, times 0.99) with ``modulus(sqrt(e1)) < epsilon``."""
    hi = epsilon**2
    if observable_modulus(system, f, math.sqrt(hi)) < epsilon:
        return 0.99 * hi
    lo = 0.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if observable_modulus(system, f, math.sqrt(mid)) < epsilon:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise ValueError("observable modulus never drops below epsilon")
    return 0.99 * lo


def log_quantile_indices(N, K):
    """Times ``n <= N`` at the ``(k + 1/2)/K`` quantiles of the weights ``1/(n M_N)``, with multiplicities."""
    w = 1.0 / np.arange(1, N + 1)
    cum = np.cumsum(w) / harmonic_number(N)
    q = (np.arange(K) + 0.5) / K
    idx = np.minimum(np.searchsorted(cum, q), N - 1) + 1
    times, counts = np.unique(idx, return_counts=True)
    return times, counts / K


@dataclass
class CertificateRow:
    N: int
    mineq: float
    es1: float
    es2: float
    coverage: float
    cauchy_schwarz: float
    holds_mineq: bool
    holds_es1: bool
    holds_es2: bool

    @property
    def holds(self):
        return self.holds_mineq and self.holds_es1 and self.holds_es2


@dataclass
class Certificate:
    """Outcome of the finite-scale disjointness certificate.

    ``rows`` hold, for each ``N``, the weighted average ``|A|`` of
    ``mu(n) f(T^n x)`` (bound ``7 eps``), the distance ``|A - B|`` to the
    block-averaged surrogate (bound ``5 eps``) and ``|B|`` (bound ``2 eps``).
    """

    epsilon: float
    epsilon1: float = float("nan")
    L: int | None = None
    m: int | None = None
    sample_size: int = 0
    trials: list = field(default_factory=list)
    status: str = "ok"
    reason: str = ""
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.status == "ok" and all(r.holds for r in self.rows)

    def report(self):
        out = [
            f"epsilon           {self.epsilon:g}",
            f"epsilon1          {self.epsilon1:.6g}",
            f"sample size       {self.sample_size}",
        ]
        for L, m, sat in self.trials:
            flag = " (saturated)" if sat else ""
            out.append(f"L-search          L={L} m={m} eps*L={self.epsilon * L:g}{flag}")
        out.append(f"status            {self.status}{': ' + self.reason if self.reason else ''}")
        if self.L is not None:
            out.append(f"chosen L, m       {self.L}, {self.m}  (m/L = {self.m / self.L:.4g})")
        for r in self.rows:
            out.append(
                f"N={r.N}  |A|={r.mineq:.6g} (<{7 * self.epsilon:g}: {r.holds_mineq})  "
                f"|A-B|={r.es1:.6g} (<{5 * self.epsilon:g}: {r.holds_es1})  "
                f"|B|={r.es2:.6g} (<{2 * self.epsilon:g}: {r.holds_es2})  "
                f"coverage={r.coverage:.6f}  CS-square={r.cauchy_schwarz:.6g}"
            )
        out.extend(self.notes)
        return "\n".join(out)


def _nearest_on_circle(centers, points):
    """Index into ``centers`` of the nearest circle point and the arc distance."""
    order = np.argsort(centers, kind="stable")
    sc = centers[order]
    pos = np.searchsorted(sc, points)
    left = (pos - 1) % sc.size
    right = pos % sc.size
    dl = np.mod(points - sc[left], 1.0)
    dl = np.minimum(dl, 1 - dl)
    dr = np.mod(sc[right] - points, 1.0)
    dr = np.minimum(dr, 1 - dr)
    pick = np.where(dr < dl, right, left)
    return order[pick], np.minimum(dl, dr)


def _assign(system, x, centers, N, L, epsilon1):
    """Assignment ``j_n`` (index into centres) and membership in ``E`` for ``n = 1..N``."""
    if isinstance(system, Rotation) and system.metric == "arc":
        t_c = np.array([c.t for c in centers])
        j, d = _nearest_on_circle(t_c, system.orbit(x, N))
    else:
        j = np.zeros(N, dtype=np.int64)
        d = np.full(N, np.inf)
        pts = [system.iterate(x, n) for n in range(1, N + 1)]
        enc = system.encode(list(centers) + pts, L)
        m = len(centers)
        for s in range(0, N, 512):
            rows = np.arange(m + s, m + min(s + 512, N))
            dist = system.mean_distances(enc, rows, np.arange(m))
            j[s : s + rows.size] = dist.argmin(axis=1)
            d[s : s + rows.size] = dist.min(axis=1)
    inside = d < epsilon1
    return np.where(inside, j, 0), inside


def _window_sums(system, x, f, centers, j, mu_ext, N, L):
    """``W(n) = sum_{l<L} mu(n+l) f(T^l x_{j_n})`` for ``n = 1..N``."""
    mu = mu_ext.astype(np.float64)
    if isinstance(system, Rotation) and isinstance(f, CircleCharacter):
        # f(T^l x_j) = e(k t_j) e(k l alpha): one correlation serves every centre
        b = orbit_observable(system, CirclePoint(0.0), f, L, start=0)
        corr = fftconvolve(mu, b[::-1], mode="valid")[:N]
        phase = np.array([f.at(system, c) for c in centers])
        return phase[j] * corr
    out = np.zeros(N, dtype=np.complex128)
    for jj in np.unique(j):
        g = orbit_observable(system, centers[jj], f, L, start=0)
        corr = fftconvolve(mu, g[::-1], mode="valid")[:N]
        sel = j == jj
        out[sel] = corr[sel]
    return out


def disjointness_certificate(
    system, x, f, epsilon, N_list, table=None, sample_size=8192, L_cap=1 << 16, saturation=0.5
):
    """Finite-scale certificate that ``mu`` is uncorrelated with ``f(T^n x)``.

    Steps: choose ``epsilon1``; quantise the log-weighted orbit measure of
    ``x`` up to ``max(N_list)`` into ``sample_size`` atoms; search dyadic ``L``
    for a measure cover with ``m < epsilon L`` centres under ``d_L``; assign
    each ``n`` to its nearest centre ``j_n`` and form the visit set ``E``;
    evaluate the three averages at every ``N``.

    A cover is only trusted when it uses fewer than ``saturation`` times the
    number of distinct atoms; otherwise the sample cannot resolve ``S_L``.
    """
    _check_eps(epsilon)
    N_list = sorted(int(N) for N in N_list)
    N_max = N_list[-1]
    cert = Certificate(epsilon=float(epsilon))
    f_vals = orbit_observable(system, x, f, N_max)
    if np.max(np.abs(f_vals)) > 1 + 1e-12:
        raise ValueError("observable must satisfy max|f| <= 1")

    if np.all(f_vals == 0):
        cert.notes.append("observable vanishes on the orbit")

    cert.epsilon1 = choose_epsilon1(system, f, epsilon)
    times, weights = log_quantile_indices(N_max, sample_size)
    atoms = [system.iterate(x, int(n)) for n in times]
    cert.sample_size = len(atoms)
    limit = saturation * len(atoms)
    L = 1 << max(0, math.ceil(math.log2(1 / epsilon)))
    chosen = None
    cached = None
    while L <= L_cap:
        if system.isometric and cached is not None:
            rep = cached
        else:
            rep = measure_covering_number(system, list(zip(atoms, weights)), L, cert.epsilon1)
            if system.isometric:
                cached = rep
        sat = rep.cardinality >= limit
        cert.trials.append((L, rep.cardinality, sat))
        if not sat and rep.cardinality < epsilon * L:
            chosen = rep
            break
        if sat and not system.isometric and len(cert.trials) >= 3:
            if all(t[2] for t in cert.trials[-3:]):
                break
        L *= 2
    if chosen is None:
        cert.status = "failed"
        cert.reason = f"no admissible L <= {L_cap}: covers saturate or m >= eps*L"
        return cert
    cert.L, cert.m = L, chosen.cardinality

    need = N_max + L
    if table is None or not table.covers(1, need):
        table = sieve_mobius(1, need)
    mu_ext = table.window(1, need)
    centers = chosen.net
    j, inside = _assign(system, x, centers, N_max, L, cert.epsilon1)
    W = _window_sums(system, x, f, centers, j, mu_ext, N_max, L)
    inv_n = 1.0 / np.arange(1, N_max + 1)
    a_terms = mu_ext[:N_max] * f_vals * inv_n
    b_terms = W / L * inv_n
    cs_terms = np.abs(W / L) ** 2 * inv_n
    for N in N_list:
        M = harmonic_number(N)
        A = complex(math.fsum(a_terms[:N].real), math.fsum(a_terms[:N].imag)) / M
        B = complex(math.fsum(b_terms[:N].real), math.fsum(b_terms[:N].imag)) / M
        cover = math.fsum(inv_n[:N][inside[:N]]) / M
        cs = math.fsum(cs_terms[:N]) / M
        cert.rows.append(
            CertificateRow(
                N=N,
                mineq=abs(A),
                es1=abs(A - B),
                es2=abs(B),
                coverage=cover,
                cauchy_schwarz=cs,
                holds_mineq=abs(A) < 7 * epsilon,
                holds_es1=abs(A - B) < 5 * epsilon,
                holds_es2=abs(B) < 2 * epsilon,
            )
        )
    return cert


# ------------------------------------------------------------ samplers


def circle_sample(rng, size):
    return [CirclePoint(t) for t in rng.random(size)]


def skew_sample(system, rng, size):
    """Points ``(x, y)`` with ``x`` drawn from the system's frequency set and ``y`` uniform."""
    base = system.frequencies.sample(rng, size)
    return [system.point(x, y) for x, y in zip(base, rng.random(size))]


def shift_sample(system, rng, size, n):
    """Independent uniform windows long enough for ``n`` steps of the mean metric."""
    R = system.radius
    return [system.random_window(rng, R, n - 1 + R) for _ in range(size)]


def rotation_orbit_sample(system, x0, size):
    return [system.iterate(x0, k) for k in range(size)]

