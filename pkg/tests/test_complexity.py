import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarnaklab.complexity import (
    choose_epsilon1,
    circle_sample,
    classify_growth,
    complexity_profile,
    covering_number,
    disjointness_certificate,
    log_quantile_indices,
    mean_distance,
    measure_covering_number,
    power_law_exponent,
    rotation_orbit_sample,
    shift_sample,
    skew_sample,
)
from sarnaklab.fourier import FrequencySet
from sarnaklab.systems import CircleCharacter, CirclePoint, Rotation, Shift, Skew, SymbolAt

GOLDEN = (math.sqrt(5) - 1) / 2


def optimal_cover_size(D, eps):
    """Smallest set of sample centres whose open eps-balls cover the sample (exhaustive)."""
    n = D.shape[0]
    balls = D < eps
    for k in range(1, n + 1):
        for combo in itertools.combinations(range(n), k):
            if balls[list(combo)].any(axis=0).all():
                return k
    return n


def optimal_mass_cover(D, eps, kmax):
    """Fewest centres whose balls carry mass > 1 - eps under uniform weights (exhaustive, k <= kmax)."""
    size = D.shape[0]
    masks = sorted({int("".join("1" if b else "0" for b in row), 2) for row in D < eps})
    need = (1 - eps) * size
    for k in range(1, kmax + 1):
        for combo in itertools.combinations(masks, k):
            acc = 0
            for m in combo:
                acc |= m
            if bin(acc).count("1") > need:
                return k
    return None


class Zero:
    def at(self, system, x):
        return 0j

    def orbit_values(self, system, x, N, start=1):
        return np.zeros(N, dtype=np.complex128)

    def modulus(self, delta, system=None):
        return 0.0


def test_mean_distance_single_step_is_distance():
    R = Rotation(0.3)
    x, y = CirclePoint(0.1), CirclePoint(0.4)
    assert mean_distance(R, x, y, 1)[0] == pytest.approx(R.distance(x, y).value)


def test_identity_system_net_independent_of_n():
    rng = np.random.default_rng(0)
    pts = circle_sample(rng, 100)
    R = Rotation(0.0)
    c = {covering_number(R, pts, n, 0.05).cardinality for n in (1, 7, 50)}
    assert len(c) == 1


def test_single_point_sample():
    assert covering_number(Rotation(GOLDEN), [CirclePoint(0.2)], 10, 0.1).cardinality == 1


def test_nonpositive_epsilon_rejected():
    with pytest.raises(ValueError):
        covering_number(Rotation(0.1), [CirclePoint(0.0)], 1, 0.0)


def test_rotation_orbit_net_n_independent_and_brute_force():
    R = Rotation(GOLDEN)
    pts = rotation_orbit_sample(R, CirclePoint(0.0), 512)
    assert covering_number(R, pts, 16, 0.1).cardinality == covering_number(R, pts, 256, 0.1).cardinality
    small = pts[:16]
    D = [R.mean_distances(R.encode(small, n), np.arange(16), np.arange(16)) for n in (16, 256)]
    assert np.allclose(D[0], D[1])
    assert optimal_cover_size(D[0], 0.1) == optimal_cover_size(D[1], 0.1)


def test_every_sample_point_is_covered():
    rng = np.random.default_rng(2)
    sk = Skew(FrequencySet.cantor(0.1, 3))
    pts = skew_sample(sk, rng, 300)
    rep = covering_number(sk, pts, 8, 0.2)
    enc = sk.encode(pts, 8)
    D = sk.mean_distances(enc, np.arange(300), rep.net_indices)
    assert np.all(D.min(axis=1) < 0.2)
    assert rep.cardinality == len(rep.net)
    assert len(rep.statements()) == 2


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.4))
def test_sandwich_against_exhaustive_optimum(seed, eps):
    rng = np.random.default_rng(seed)
    R = Rotation(GOLDEN)
    pts = circle_sample(rng, 12)
    enc = R.encode(pts, 4)
    D = R.mean_distances(enc, np.arange(12), np.arange(12))
    opt = optimal_cover_size(D, eps)
    assert covering_number(R, pts, 4, eps).cardinality >= opt
    assert covering_number(R, pts, 4, 2 * eps).cardinality <= opt
    # monotone in epsilon
    assert covering_number(R, pts, 4, eps / 2).cardinality >= covering_number(R, pts, 4, eps).cardinality


def test_measure_cover_point_mass_and_degenerate():
    R = Rotation(GOLDEN)
    assert measure_covering_number(R, [(CirclePoint(0.3), 1.0)], 5, 0.1).cardinality == 1
    rep = measure_covering_number(R, [(CirclePoint(0.3), 0.5), (CirclePoint(0.8), 0.5)], 5, 1.2)
    assert rep.cardinality == 1 and rep.degenerate
    with pytest.raises(ValueError):
        measure_covering_number(R, [(CirclePoint(0.3), 0.7)], 5, 0.1)


def test_measure_cover_vs_exhaustive_on_skew():
    # arc fibre metric keeps the optimum within reach of the size-4 search
    sk = Skew(FrequencySet.finite([0.0, GOLDEN]), fiber_metric="arc")
    rng = np.random.default_rng(4)
    x0 = sk.point(GOLDEN, rng.random())
    x1 = sk.point(0.0, rng.random())
    pts = [sk.iterate(x0, k) for k in range(100)] + [sk.iterate(x1, k) for k in range(100)]
    w = np.full(200, 1 / 200)
    rep = measure_covering_number(sk, list(zip(pts, w)), 4, 0.2)
    enc = sk.encode(pts, 4)
    D = sk.mean_distances(enc, np.arange(200), np.arange(200))
    opt = optimal_mass_cover(D, 0.2, 4)
    assert opt is not None and rep.cardinality >= opt
    full = covering_number(sk, pts, 4, 0.2)
    assert rep.cardinality <= full.cardinality


def test_classify_growth_labels():
    grid = [16, 32, 64, 128, 256]
    assert classify_growth(grid, [9] * 5)[4] == "bounded"
    assert classify_growth(grid, [round(n**0.5) for n in grid])[4] == "sublinear"
    assert classify_growth(grid, [n**2 for n in grid])[4] == "polynomial"
    assert classify_growth([2, 3, 4, 5, 6], [2**n for n in (2, 3, 4, 5, 6)])[4] == "superpolynomial"
    with pytest.raises(ValueError):
        classify_growth([1, 2, 3], [1, 2, 3])


def test_power_law_exponent_exact():
    slope, r2 = power_law_exponent([1, 2, 4, 8], [3, 12, 48, 192])
    assert slope == pytest.approx(2.0) and r2 == pytest.approx(1.0)


def test_rotation_profile_bounded():
    R = Rotation(GOLDEN)
    pts = rotation_orbit_sample(R, CirclePoint(0.0), 256)
    prof = complexity_profile(R, pts, 0.1, [4, 16, 64, 256])
    assert prof.classification == "bounded"
    assert len(set(prof.counts)) == 1


def test_full_shift_superpolynomial_with_prefix_oracle():
    shift = Shift("binary", radius=8)
    rng = np.random.default_rng(7)
    grid = [4, 5, 6, 7, 8, 9, 10]
    samples = {n: shift_sample(shift, rng, 4096, n) for n in grid}
    prof = complexity_profile(shift, lambda n: samples[n], 0.1, grid)
    assert prof.classification == "superpolynomial"
    # distinct prefixes of length n + R: at least 2^{0.9 n} of them
    for n in grid:
        words = {tuple(w.span(0, n - 1)) for w in samples[n]}
        assert len(words) >= 2 ** (0.9 * n)


def test_log_quantiles_cover_weights():
    times, w = log_quantile_indices(1000, 64)
    assert w.sum() == pytest.approx(1.0)
    assert times.min() >= 1 and times.max() <= 1000
    assert np.all(np.diff(times) > 0)


def test_epsilon1_respects_modulus():
    R = Rotation(GOLDEN)
    e1 = choose_epsilon1(R, CircleCharacter(1), 0.1)
    assert e1 < 0.01
    assert CircleCharacter(1).modulus(math.sqrt(e1), R) < 0.1


def test_certificate_zero_observable():
    R = Rotation(GOLDEN)
    cert = disjointness_certificate(R, CirclePoint(0.0), Zero(), 0.1, [10_000], sample_size=1024)
    assert cert.passed
    r = cert.rows[0]
    assert r.mineq == 0 and r.es1 == 0 and r.es2 == 0


def test_certificate_rotation_small_N():
    R = Rotation(GOLDEN)
    cert = disjointness_certificate(R, CirclePoint(0.0), CircleCharacter(1), 0.1, [10_000, 100_000], sample_size=8192)
    assert cert.status == "ok" and cert.m < 0.1 * cert.L
    assert cert.passed
    assert "L-search" in cert.report()


def test_certificate_full_shift_fails_at_L_search():
    shift = Shift("binary", radius=6)
    rng = np.random.default_rng(0)
    x = shift.random_window(rng, 6, 3000)
    cert = disjointness_certificate(shift, x, SymbolAt(0), 0.01, [500], sample_size=256, L_cap=1 << 10)
    assert cert.status == "failed" and not cert.passed
