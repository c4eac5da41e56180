import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarnaklab.arith import sieve_mobius
from sarnaklab.coding import (
    Arc,
    Cylinder,
    Indicator,
    Rectangle,
    Whole,
    code_point,
    coding_sequence,
    complexity_transfer_check,
    disagreement_density,
    mollify_indicator,
    smallness_test,
    transfer_parameters,
    verify_coding_stability,
)
from sarnaklab.systems import CirclePoint, Product, Rotation, SequenceSpec, Shift, Skew, orbit_observable

GOLDEN = (math.sqrt(5) - 1) / 2
ROT = Rotation(GOLDEN)


def test_whole_space_has_no_collar():
    rep = smallness_test(ROT, Whole(), 0.1, 1000, [CirclePoint(0.3)])
    assert rep.max_frequency == 0 and rep.max_log_frequency == 0


def test_arc_collar_frequency_is_four_eps0():
    U = Arc(0.1, 0.6)
    eps0 = 0.01
    x = CirclePoint(0.123)
    rep = smallness_test(ROT, U, eps0, 100_000, [x])
    # direct count: orbit points within eps0 of either endpoint
    t = np.mod(x.t + np.arange(100_000) * GOLDEN, 1.0)
    d = lambda c: np.minimum(np.abs(t - c), 1 - np.abs(t - c))
    direct = np.mean((d(0.1) < eps0) | (d(0.6) < eps0))
    assert rep.max_frequency == pytest.approx(direct, abs=1e-12)
    assert abs(rep.max_frequency - 4 * eps0) < 1e-3


def test_cylinder_is_clopen():
    rng = np.random.default_rng(0)
    shift = Shift("binary", radius=4)
    x = shift.random_window(rng, 10, 200)
    rep = smallness_test(shift, Cylinder(0, 1), 0.1, 100, [x])
    assert rep.max_frequency == 0


def test_collar_frequency_shrinks_with_eps0_and_settles_with_N():
    U = Arc(0.2, 0.7)
    x = [CirclePoint(0.0)]
    f = [smallness_test(ROT, U, e, 20_000, x).max_frequency for e in (0.02, 0.01, 0.005)]
    assert f[0] > f[1] > f[2]
    near = [abs(smallness_test(ROT, U, 0.01, n, x).max_frequency - 0.04) for n in (500, 50_000)]
    assert near[1] < near[0] or near[1] < 2e-3


def test_code_point_whole_space_all_ones():
    assert code_point(ROT, Whole(), CirclePoint(0.4), 0, 99).all()


def test_sturmian_density():
    c = code_point(ROT, Arc(0.0, 0.5), CirclePoint(0.1), 0, 99_999)
    assert abs(c.mean() - 0.5) < 0.01


def test_boundary_convention_closed_left():
    U = Arc(0.25, 0.5)
    assert code_point(Rotation(0.0), U, CirclePoint(0.25), 0, 0)[0] == 1
    assert code_point(Rotation(0.0), U, CirclePoint(0.5), 0, 0)[0] == 0


def test_wrapping_arc():
    U = Arc(0.9, 0.1)
    t = np.array([0.95, 0.05, 0.5, 0.1, 0.9])
    assert U.contains_t(t).tolist() == [True, True, False, False, True]


def test_coding_commutes_with_dynamics():
    x = CirclePoint(0.37)
    U = Arc(0.1, 0.45)
    cx = code_point(ROT, U, x, 0, 500)
    ctx = code_point(ROT, U, ROT.apply(x), 0, 499)
    assert np.array_equal(cx[1:], ctx)


def test_coding_export_roundtrip(tmp_path):
    seq = coding_sequence(ROT, Arc(0.1, 0.6), CirclePoint(0.2), -5, 50)
    path = tmp_path / "code.txt"
    seq.save(path)
    back = SequenceSpec.load(path)
    assert back.alphabet == "binary" and back.lo == -5
    assert np.array_equal(back.symbols, seq.symbols)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_disagreement_density_triangle(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.integers(0, 2, 64) for _ in range(3))
    ab, bc, ac = (np.count_nonzero(u != v) for u, v in ((a, b), (b, c), (a, c)))
    assert ac <= ab + bc
    assert disagreement_density(a, a) == 0


def test_rectangle_signed_distance_max_metric():
    sk = Skew()
    U = Rectangle((Arc(0.2, 0.4, 0), Arc(0.0, 0.5, 1)))
    x = sk.point(0.3, 0.25)
    ns = np.array([0])
    # inside: nearest face is the base arc, 0.1 away
    assert U.signed_distance(sk, x, ns)[0] == pytest.approx(0.1)
    out = sk.point(0.45, 0.25)
    assert U.signed_distance(sk, out, ns)[0] == pytest.approx(-0.05)


def test_stability_identical_points_and_vacuous():
    rep = verify_coding_stability(ROT, Arc(0.1, 0.6), 1.5, 100)
    assert rep.passed and rep.vacuous
    x = CirclePoint(0.3)
    c = code_point(ROT, Arc(0.1, 0.6), x, 0, 999)
    assert disagreement_density(c, c) == 0


def test_stability_rotation_small():
    rep = verify_coding_stability(ROT, Arc(0.1, 0.6), 0.1, 2000, pair_count=30, seed=3)
    assert rep.passed and not rep.inconclusive
    assert 0 < rep.eps < 0.1**2
    assert rep.smallness < 0.1
    assert rep.max_density <= 0.2


def test_stability_search_respects_separation():
    rep = verify_coding_stability(ROT, Arc(0.1, 0.6), 0.2, 1000, pair_count=10, seed=1)
    # close points on opposite sides of a collar-free point must not exist
    assert math.sqrt(rep.eps) <= rep.eps0 * 1.01


def test_transfer_parameters_satisfy_budget():
    for delta in (0.5, 0.1, 0.01):
        L, dp = transfer_parameters(delta)
        assert 4 * dp * L + 2 / 2**L < delta


def test_transfer_whole_space_single_coding():
    rep = complexity_transfer_check(ROT, Whole(), 0.1, 64, sample_size=64)
    assert rep.coded_count == 1 and rep.holds


def test_transfer_rotation_arc():
    rep = complexity_transfer_check(ROT, Arc(0.1, 0.6), 0.2, 64, sample_size=128)
    assert rep.holds and rep.mapped_cover_ok


def test_transfer_product_with_rotation():
    prod = Product((Rotation(GOLDEN), Rotation(math.sqrt(2) - 1)))
    U = Rectangle((Arc(0.0, 0.5, 0), Arc(0.25, 0.75, 1)))
    rep = complexity_transfer_check(prod, U, 0.3, 32, sample_size=64)
    assert rep.holds


def test_mollifier_values():
    U = Arc(0.2, 0.6)
    h = mollify_indicator(ROT, U, 0.02)
    assert h.at(Rotation(0.0), CirclePoint(0.4)) == 1
    assert h.at(Rotation(0.0), CirclePoint(0.9)) == 0
    mid = h.at(Rotation(0.0), CirclePoint(0.21)).real
    assert 0 < mid < 1
    with pytest.raises(ValueError):
        mollify_indicator(ROT, U, 0.0)


def test_mollifier_vs_indicator_log_average():
    N = 50_000
    table = sieve_mobius(1, N)
    U, eps0 = Arc(0.1, 0.6), 0.01
    x = CirclePoint(0.2)
    mu = table.window(1, N).astype(float)
    w = 1.0 / np.arange(1, N + 1)
    M = w.sum()
    ind = orbit_observable(ROT, x, Indicator(U), N).real
    smooth = orbit_observable(ROT, x, mollify_indicator(ROT, U, eps0), N).real
    gap = abs(np.sum(mu * ind * w) - np.sum(mu * smooth * w)) / M
    collar = smallness_test(ROT, U, eps0, N, [x]).max_log_frequency
    assert gap <= collar + 1e-12
