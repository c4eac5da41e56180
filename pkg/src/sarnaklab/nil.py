"""Step-two nilpotent groups in Mal'cev coordinates, their metrics and polynomial sequences.

Elements are coordinate arrays of shape ``(..., m)``. A group is described by
a bilinear cocycle ``Q``: the product of ``g`` and ``h`` has coordinates
``g + h + Q(g, h)``, where ``Q`` only feeds central coordinates and only
reads non-central ones. This covers abelian groups (``Q = 0``) and the
Heisenberg group, whose law is ``(a, b, c)(a', b', c') = (a + a', b + b', c + c' + a b')``.
In these coordinates ``g = exp(b X2) exp(a X1) exp(c X3)`` with ``[X1, X2] = X3``,
and the lattice is the set of integer coordinate vectors.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .complexity import CoveringReport, power_law_exponent

MAX_EXACT = 2**53


@dataclass(frozen=True, eq=False)
class NilGroup:
    """Simply connected nilpotent group of step at most two.

    Attributes:
        name: Label used in reports and files.
        dim: Number of coordinates ``m``.
        cocycle: Array ``Q[k, i, j]``; coordinate ``k`` of ``g h`` gains ``sum Q[k,i,j] g_i h_j``.
        filtration: ``filtration[j]`` is the first coordinate allowed to be
            nonzero in ``G_j`` (``j = 0 .. degree + 1``); the last entry is ``dim``.
        brackets: ``(i, j, k, coef)`` entries of ``[X_i, X_j] = coef X_k`` (0-based).
    """

    name: str
    dim: int
    cocycle: np.ndarray
    filtration: tuple
    brackets: tuple = ()

    def __post_init__(self):
        Q = np.asarray(self.cocycle, dtype=float)
        if Q.shape != (self.dim,) * 3:
            raise ValueError("cocycle must have shape (dim, dim, dim)")
        receivers = np.flatnonzero(np.abs(Q).sum(axis=(1, 2)))
        readers = np.flatnonzero(np.abs(Q).sum(axis=(0, 2)) + np.abs(Q).sum(axis=(0, 1)))
        if np.intersect1d(receivers, readers).size:
            raise ValueError("cocycle must not read the coordinates it writes (step > 2)")
        if self.filtration[-1] != self.dim or list(self.filtration) != sorted(self.filtration):
            raise ValueError("filtration markers must increase to dim")
        object.__setattr__(self, "cocycle", Q)
        object.__setattr__(self, "filtration", tuple(int(x) for x in self.filtration))

    @property
    def degree(self):
        """Number of nontrivial filtration steps after ``G_0``: Taylor coefficients are ``g_0..g_degree``."""
        return len(self.filtration) - 2

    @property
    def step(self):
        return 2 if np.any(self.cocycle) else 1

    @property
    def central(self):
        return np.flatnonzero(np.abs(self.cocycle).sum(axis=(1, 2)))

    def identity(self, shape=()):
        return np.zeros(shape + (self.dim,))

    def _Q(self, g, h):
        return np.einsum("kij,...i,...j->...k", self.cocycle, g, h)

    def mult(self, g, h):
        g, h = np.asarray(g, float), np.asarray(h, float)
        return g + h + self._Q(g, h)

    def inverse(self, g):
        g = np.asarray(g, float)
        return -g + self._Q(g, g)

    def power(self, g, t):
        """``g^t`` along the one-parameter subgroup through ``g``; ``t`` may be real or an array."""
        g = np.asarray(g, float)
        t = np.asarray(t, float)[..., None]
        return t * g + 0.5 * (t * t - t) * self._Q(g, g)

    def commutator(self, g, h):
        return self.mult(self.mult(g, h), self.inverse(self.mult(h, g)))

    def in_subgroup(self, g, j, tol=0.0):
        """Whether ``g`` lies in ``G_j`` (coordinates below the marker vanish)."""
        start = self.filtration[min(j, len(self.filtration) - 1)]
        return bool(np.all(np.abs(np.asarray(g)[..., :start]) <= tol))

    def check_brackets(self):
        """Group commutators of coordinate generators reproduce the declared brackets."""
        declared = np.zeros((self.dim,) * 3)
        for i, j, k, coef in self.brackets:
            declared[k, i, j] += coef
            declared[k, j, i] -= coef
        eye = np.eye(self.dim)
        for i, j in itertools.product(range(self.dim), repeat=2):
            if not np.allclose(self.commutator(eye[i], eye[j]), declared[:, i, j], atol=1e-12):
                return False
        return True

    def reduce(self, g):
        """Split ``g = g' gamma`` with ``g'`` in the unit box ``[0,1)^m`` and ``gamma`` integral."""
        g = np.array(g, dtype=float)
        kappa = np.zeros_like(g)
        central = set(self.central.tolist())
        order = [i for i in range(self.dim) if i not in central] + sorted(central)
        out = g.copy()
        for i in order:
            # coordinate i of g * kappa equals g_i + kappa_i + Q_i(g, kappa) and Q_i only reads settled coordinates
            current = g[..., i] + self._Q(g, kappa)[..., i]
            k = -np.floor(current)
            val = current + k
            wrap = val >= 1.0
            k = np.where(wrap, k - 1, k)
            kappa[..., i] = k
            out[..., i] = np.where(wrap, 0.0, val)
        return out, self.inverse(kappa)

    def spec(self):
        return {
            "name": self.name,
            "dim": self.dim,
            "step": self.step,
            "filtration": list(self.filtration),
            "brackets": [list(b) for b in self.brackets],
            "cocycle": [[i, j, k, float(self.cocycle[k, i, j])] for k, i, j in zip(*np.nonzero(self.cocycle))],
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.spec(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        Q = np.zeros((data["dim"],) * 3)
        for i, j, k, v in data["cocycle"]:
            Q[k, i, j] = v
        return cls(data["name"], data["dim"], Q, tuple(data["filtration"]), tuple(map(tuple, data["brackets"])))


def heisenberg():
    Q = np.zeros((3, 3, 3))
    Q[2, 0, 1] = 1.0
    return NilGroup("heisenberg", 3, Q, (0, 0, 2, 3), ((0, 1, 2, 1.0),))


def abelian(m=1, degree=1):
    """``R^m`` with lattice ``Z^m``; ``degree`` sets the polynomial degree allowed by the filtration."""
    return NilGroup(f"abelian{m}", m, np.zeros((m, m, m)), (0,) * (degree + 1) + (m,))


HEISENBERG = heisenberg()


# --------------------------------------------------------------- metrics


def psi_norm(g):
    return np.abs(np.asarray(g)).max(axis=-1)


def _cost(G, u):
    return np.minimum(psi_norm(u), psi_norm(G.inverse(u)))


def chain_candidates(G, u):
    """Intermediate nodes tried by the chain search: fractional powers and coordinate projections."""
    cands = [G.power(u, t) for t in (0.25, 0.5, 0.75)]
    for r in range(1, G.dim):
        for keep in itertools.combinations(range(G.dim), r):
            z = np.zeros_like(u)
            z[..., list(keep)] = u[..., list(keep)]
            cands.append(z)
    return cands


def _chain_bound(G, u, depth):
    best = _cost(G, u)
    if depth <= 1:
        return best
    for z in chain_candidates(G, u):
        hop = _cost(G, G.mult(u, G.inverse(z)))
        best = np.minimum(best, hop + _chain_bound(G, z, depth - 1))
    return best


def group_metric(G, x, y, chain_depth=1):
    """Upper bound for the chain metric on ``G`` using chains of at most ``chain_depth`` hops.

    The search runs on the relative increment ``x y^{-1}`` (and its inverse),
    so the bound is right-invariant. Depth 1 gives
    ``min(|psi(x y^-1)|, |psi(y x^-1)|)``; larger depths never increase it.
    """
    if chain_depth < 1:
        raise ValueError("chain_depth must be at least 1")
    x, y = np.asarray(x, float), np.asarray(y, float)
    u = G.mult(x, G.inverse(y))
    v = G.mult(y, G.inverse(x))
    d = np.minimum(_chain_bound(G, u, chain_depth), _chain_bound(G, v, chain_depth))
    return np.where(np.all(x == y, axis=-1), 0.0, d)


@dataclass(frozen=True)
class QuotientDistance:
    value: float
    gamma: tuple
    touches_boundary: bool


def lattice_box(dim, radius):
    r = range(-radius, radius + 1)
    return np.array(list(itertools.product(r, repeat=dim)), dtype=float)


def quotient_metric(G, x, y, lattice_radius=3, chain_depth=1):
    """``min_gamma d(x, y gamma)`` over integer ``gamma`` with coordinates in ``[-radius, radius]``."""
    gammas = lattice_box(G.dim, lattice_radius)
    yg = G.mult(np.asarray(y, float)[None, :], gammas)
    d = group_metric(G, np.asarray(x, float)[None, :], yg, chain_depth)
    i = int(np.argmin(d))
    touch = bool(lattice_radius > 0 and np.abs(gammas[i]).max() == lattice_radius)
    return QuotientDistance(float(d[i]), tuple(int(v) for v in gammas[i]), touch)


def _centered_frac(v):
    return v - np.round(v)


def quotient_distance_fast(G, x, y):
    """Depth-one quotient distance minimised over the whole lattice, in closed form.

    Supported for abelian groups and the Heisenberg group. For those the
    optimal lattice shift rounds the non-central differences, and the
    central coordinate is then reduced freely, so every coordinate of the
    optimum lies in ``[-1/2, 1/2]``.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    if G.step == 1:
        return np.abs(_centered_frac(x - y)).max(axis=-1)
    if G.name != "heisenberg":
        raise NotImplementedError("closed form available for abelian and Heisenberg groups")
    ax, bx, cx = x[..., 0], x[..., 1], x[..., 2]
    ay, by, cy = y[..., 0], y[..., 1], y[..., 2]
    k1 = np.round(ax - ay)
    k2 = np.round(bx - by)
    av, bv = ay + k1, by + k2
    da, db = np.abs(ax - av), np.abs(bx - bv)
    # v = y gamma has central coordinate cy + k3 + ay k2 with k3 free
    base_c = cy + ay * k2
    w1 = cx - base_c + av * bv - ax * bv
    w2 = base_c - cx + ax * bx - av * bx
    c = np.minimum(np.abs(_centered_frac(w1)), np.abs(_centered_frac(w2)))
    return np.maximum(np.maximum(da, db), c)


# ---------------------------------------------------- polynomial sequences


def binom(n, j):
    """Exact ``C(n, j)`` for any integer ``n`` (falling factorial over ``j!``)."""
    num = 1
    for i in range(j):
        num *= n - i
    return num // math.factorial(j)


@dataclass(frozen=True, eq=False)
class PolySeq:
    """``g(n) = g_0^{C(n,0)} g_1^{C(n,1)} ... g_s^{C(n,s)}`` stored by Taylor coefficients."""

    group: NilGroup
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[1] != self.group.dim:
            raise ValueError("coefficients must have shape (s+1, dim)")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return self.coeffs.shape[0] - 1

    def adapted(self, tol=0.0):
        return all(self.group.in_subgroup(g, j, tol) for j, g in enumerate(self.coeffs))

    def __call__(self, n):
        return poly_eval(self.group, self, n)


def _binom_array(ns, j):
    vals = [binom(int(n), j) for n in np.atleast_1d(ns)]
    worst = max(abs(v) for v in vals)
    if worst > MAX_EXACT:
        raise OverflowError(f"binomial C(n,{j}) reaches {worst}, above 2**53")
    return np.array(vals, dtype=float)


def poly_eval(G, p, n):
    """Evaluate a polynomial sequence at an integer or an integer array."""
    scalar = np.ndim(n) == 0
    ns = np.atleast_1d(np.asarray(n, dtype=np.int64))
    out = np.broadcast_to(G.identity(), ns.shape + (G.dim,)).copy()
    for j, g in enumerate(p.coeffs):
        out = G.mult(out, G.power(g, _binom_array(ns, j)))
    return out[0] if scalar else out


def from_linear(G, g, h):
    """Taylor coefficients of ``n -> g^n h``: ``(h, h^{-1} g h)``."""
    h = np.asarray(h, float)
    return PolySeq(G, np.stack([h, G.mult(G.mult(G.inverse(h), g), h)]))


def discrete_derivative(G, f, h, n):
    """``f(n + h) f(n)^{-1}`` for a callable ``f``."""
    return G.mult(f(n + h), G.inverse(f(n)))


def taylor_coefficients(G, values):
    """Coefficients ``g_0..g_s`` of the polynomial sequence taking ``values[j]`` at ``n = j``."""
    coeffs = []
    for j, target in enumerate(values):
        prefix = G.identity()
        for i, g in enumerate(coeffs):
            prefix = G.mult(prefix, G.power(g, binom(j, i)))
        coeffs.append(G.mult(G.inverse(prefix), target))
    return np.stack(coeffs)


@dataclass(frozen=True, eq=False)
class Factorization:
    smooth: PolySeq
    lattice: PolySeq


def factorize(G, p):
    """Split ``p = p' gamma`` with ``p'`` coefficients in the unit box and ``gamma`` integral.

    Works upward in degree: after the coefficients below ``j`` are in the box,
    the degree-``j`` coefficient ``q_j`` of ``p gamma^{-1}`` is reduced to
    ``q_j = q'_j kappa^{-1}``, and ``gamma`` is updated by ``kappa^{-C(n, j)}``
    on the left. Values at ``n < j`` do not change, so lower coefficients stay put.
    """
    if G.step > 2:
        raise NotImplementedError("factorisation is implemented for step at most two")
    s = p.degree
    ns = np.arange(s + 1)
    pv = poly_eval(G, p, ns)
    gamma_vals = np.broadcast_to(G.identity(), pv.shape).copy()
    for j in range(s + 1):
        q = taylor_coefficients(G, G.mult(pv, G.inverse(gamma_vals)))
        qj = q[j].copy()
        lead = G.filtration[min(j, len(G.filtration) - 1)]
        # coordinates outside G_j carry only rounding noise here; left alone, reduce would floor -1e-16 to -1
        if np.any(np.abs(qj[:lead]) > 1e-9 * max(1.0, psi_norm(q).max())):
            raise ValueError(f"coefficient {j} is not in G_{j}: the sequence is not adapted")
        qj[:lead] = 0.0
        _, gamma_j = G.reduce(qj)
        kappa = np.round(G.inverse(gamma_j))
        left = G.power(G.inverse(kappa), _binom_array(ns, j))
        gamma_vals = np.round(G.mult(left, gamma_vals))
    lattice = np.round(taylor_coefficients(G, gamma_vals))
    smooth = taylor_coefficients(G, G.mult(pv, G.inverse(gamma_vals)))
    for j in range(s + 1):
        smooth[j, : G.filtration[min(j, len(G.filtration) - 1)]] = 0.0
    return Factorization(PolySeq(G, smooth), PolySeq(G, lattice))


def random_box_poly(G, rng, count=None):
    """Polynomial sequences with coefficients uniform in the unit box intersected with ``G_j``."""
    shape = () if count is None else (count,)
    coeffs = rng.random(shape + (G.degree + 1, G.dim))
    for j in range(G.degree + 1):
        coeffs[..., j, : G.filtration[j]] = 0.0
    return coeffs


def poly_strings(G, coeffs, n):
    """Reduced orbit strings ``g(k) Gamma`` for ``k < n``, shape ``(count, n, dim)``."""
    ks = np.arange(n)
    out = np.broadcast_to(G.identity(), coeffs.shape[:1] + (n, G.dim)).copy()
    for j in range(coeffs.shape[1]):
        t = _binom_array(ks, j)
        out = G.mult(out, G.power(coeffs[:, None, j, :], t[None, :]))
    return G.reduce(out)[0]


def poly_covering_number(G, n, epsilon, sample_count, seed=0, block=8, coeffs=None):
    """Greedy ``epsilon``-net of orbit strings of random box-coefficient polynomial sequences.

    Two strings are within ``epsilon`` when every coordinate pair is, using
    :func:`quotient_distance_fast` (depth-one surrogate minimised over the lattice).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    rng = np.random.default_rng(seed)
    if coeffs is None:
        coeffs = random_box_poly(G, rng, sample_count)
    strings = poly_strings(G, coeffs, n)
    centers = []
    net = np.empty((0, n, G.dim))
    for i in range(strings.shape[0]):
        alive = np.arange(net.shape[0])
        for k0 in range(0, n, block):
            if alive.size == 0:
                break
            d = quotient_distance_fast(G, strings[i, None, k0 : k0 + block], net[alive, k0 : k0 + block])
            alive = alive[d.max(axis=1) < epsilon]
        if alive.size == 0:
            centers.append(i)
            net = np.concatenate([net, strings[i][None]], axis=0)
    centers = np.asarray(centers)
    return CoveringReport(
        n=int(n),
        epsilon=float(epsilon),
        net=[PolySeq(G, coeffs[i]) for i in centers],
        net_indices=centers,
        cardinality=len(centers),
        sample_size=strings.shape[0],
        tail_bound=0.0,
        note="sup over k < n of the depth-one quotient surrogate",
    )


@dataclass
class NilGrowth:
    grid: list
    values: list
    exponent: float
    r2: float
    notes: list = field(default_factory=list)


def psi_growth(G, p, grid):
    """Fit ``log |psi(g(n))|`` against ``log n`` (polynomial growth of coordinates)."""
    vals = [float(psi_norm(poly_eval(G, p, int(n)))) for n in grid]
    slope, r2 = power_law_exponent(grid, vals)
    return NilGrowth(list(grid), vals, slope, r2)


def power_exponent(G, n, scales, rng, trials=64):
    """Fit ``log max |psi(g^n)|`` against ``log |psi(g)|`` over random ``g`` of each scale."""
    vals = []
    for s in scales:
        g = (rng.random((trials, G.dim)) * 2 - 1) * s
        g[:, 0] = s
        vals.append(float(psi_norm(G.power(g, n)).max()))
    slope, r2 = power_law_exponent(scales, vals)
    return NilGrowth(list(scales), vals, slope, r2, [f"n={n}"])
