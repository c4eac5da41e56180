import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarnaklab.arith import sieve_mobius
from sarnaklab.construct import (
    BlockSpec,
    ConstantSignal,
    ap_power_sum,
    assemble_sequence,
    check_property_star,
    classify_window,
    floor_power,
    gen_measure_support_check,
    growth_condition,
    minimal_scales,
    select_gapped_subset,
    verify_lower_bound_chain,
)
from sarnaklab.fourier import FrequencySet
from sarnaklab.nil import HEISENBERG


def best_gapped_mass(S, gap):
    """Exhaustive optimum of the harmonic mass over gap-respecting subsets."""
    S = sorted(S)
    best = [Fraction(0)] * (len(S) + 1)
    for k in range(1, len(S) + 1):
        s = S[k - 1]
        j = k - 1
        while j > 0 and s - S[j - 1] < gap:
            j -= 1
        best[k] = max(best[k - 1], best[j] + Fraction(1, s))
    return best[-1]


# ------------------------------------------------------------ selection


def test_gapped_subset_keeps_spread_sets():
    S = [3, 10, 20, 31]
    assert select_gapped_subset(S, 5).subset == S


def test_gapped_subset_pigeonhole():
    H = 7
    assert len(select_gapped_subset(list(range(1, 2 * H + 1)), 2 * H).subset) == 1


def test_gapped_subset_dp_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        S = sorted(rng.choice(np.arange(1000, 1400), size=30, replace=False).tolist())
        gap = 100
        sel = select_gapped_subset(S, gap)
        greedy = sum(Fraction(1, s) for s in sel.subset)
        assert greedy <= best_gapped_mass(S, gap)
        assert greedy >= sum(Fraction(1, s) for s in S) / gap
        assert all(b - a >= gap for a, b in zip(sel.subset, sel.subset[1:]))


def test_gapped_subset_density_half():
    rng = np.random.default_rng(1)
    n = np.arange(1000, 100_001)
    S = n[rng.random(n.size) < 0.5].tolist()
    sel = select_gapped_subset(S, 100)
    total = math.fsum(1.0 / s for s in S)
    assert sel.mass >= total / (2 * 100)


# ------------------------------------------------------------- assembly


def spec_with(selected, H=5, N=200, alpha=0.3, tau=0.5):
    return BlockSpec(tau, [(H, N)], frequencies=[alpha], selected=[selected])


def test_empty_selection_gives_constant_p():
    y = assemble_sequence(BlockSpec(0.5, [(3, 50)], selected=[[]]), lo=0, hi=40)
    assert y.is_p().all()


def test_single_block_is_linear_phase():
    alpha, n, H = 0.2718, 10, 6
    y = assemble_sequence(spec_with([n], H=H, alpha=alpha))
    for h in range(1, H + 1):
        assert np.exp(2j * np.pi * y.symbols[n + h - y.lo]) == pytest.approx(np.exp(2j * np.pi * h * alpha), abs=1e-12)
    assert y.is_p()[: n + 1].all()


def test_collision_rejected():
    with pytest.raises(ValueError, match="collide"):
        assemble_sequence(spec_with([10, 12], H=5))


def test_property_star_roundtrip_and_locality():
    C = FrequencySet.cantor(0.1, 4)
    alphas = np.zeros(2001)
    starts = [20, 200, 600, 1400]
    for k, s in enumerate(starts):
        alphas[s] = C.points[3 * k + 1]
    spec = BlockSpec(0.5, [(40, 2000)], frequencies=[alphas], phases=[0.0], selected=[starts])
    y = assemble_sequence(spec)
    rep = check_property_star(y, C, tol=1e-9)
    assert rep.passed and len(rep.blocks) == 4
    bad = y.symbols.copy()
    bad[215] += 0.1
    from sarnaklab.construct import AssembledSequence

    rep2 = check_property_star(AssembledSequence("fourier", y.lo, bad, y.ledger), C, tol=1e-9)
    assert rep2.failures == [201]


def test_property_star_membership_tolerance():
    C = FrequencySet.finite([0.3])
    tol = 1e-6
    y = assemble_sequence(spec_with([10], alpha=0.3 + 2 * tol))
    rep = check_property_star(y, C, tol=tol)
    assert not rep.passed and not rep.blocks[0].in_set


def test_block_lengths_grow():
    spec = BlockSpec(0.5, [(4, 100), (20, 1000)], frequencies=[0.1, 0.1], selected=[[10, 50], [300, 700]])
    rep = check_property_star(assemble_sequence(spec), FrequencySet.finite([0.1]), tol=1e-9)
    assert rep.lengths == [4, 4, 20, 20] and rep.lengths_grow


def test_support_check():
    y = assemble_sequence(BlockSpec(0.5, [(10, 500)], selected=[[]]), hi=500)
    assert gen_measure_support_check(y, [(0, 100)]).frequencies == [0.0]
    L = 10
    y = assemble_sequence(BlockSpec(0.5, [(L, 500)], selected=[[20]]), hi=200)
    rep = gen_measure_support_check(y, [(0, 10 * L)])
    assert rep.frequencies[0] == pytest.approx(1 / (10 * L))


def test_support_frequencies_decrease_with_growing_blocks():
    scales = [(4, 200), (16, 2000), (64, 20000)]
    selected = [list(range(10, 150, 8)), list(range(300, 1900, 32)), list(range(2100, 19000, 128))]
    y = assemble_sequence(BlockSpec(0.5, scales, frequencies=[0.1] * 3, selected=selected))
    rep = gen_measure_support_check(y, [(0, 150), (0, 1900), (0, 19000)])
    assert rep.decreasing


def test_window_classes():
    y = assemble_sequence(BlockSpec(0.5, [(10, 200)], selected=[[50]]), hi=200)
    assert classify_window(y, 48, 4) == ("head_p", 3)
    assert classify_window(y, 58, 4) == ("tail_p", 3)
    assert classify_window(y, 55, 4) == ("head_p", -4)
    assert classify_window(y, 20, 4) == ("tail_p", -4)
    assert classify_window(y, 55, 10)[0] == "other"


def test_nil_variant_points_reduced():
    G = HEISENBERG
    g = np.array([0.3, 0.7, 0.1])
    spec = BlockSpec(0.5, [(5, 100)], group=G, elements=[g], x0=G.identity(), selected=[[10]])
    y = assemble_sequence(spec, "nil")
    rows = y.symbols[11:16]
    assert np.all((rows >= 0) & (rows < 1))
    direct = G.reduce(G.power(g, 3.0))[0]
    assert np.allclose(rows[2], direct)


# ---------------------------------------------------------------- scales


def test_floor_power_exact():
    assert floor_power(801**800, 1 / 800) == 801
    assert floor_power(801**800 - 1, 1 / 800) == 800


def test_minimal_scales_satisfy_growth():
    for tau in (0.5, 0.7):
        scales, heads = minimal_scales(tau, 3)
        assert all(growth_condition(tau, scales))
        s = tau * tau / 200
        assert heads[0] > scales[0][0] / s


def test_ap_power_sum_matches_direct():
    for k in (1, 2, 3):
        direct = math.fsum((7 + 4 * j) ** -k for j in range(500))
        assert float(ap_power_sum(7, 4, 500, k)) == pytest.approx(direct, rel=1e-13)


# ----------------------------------------------------------------- chain


def test_zero_signal_fails_at_threshold():
    scales, heads = minimal_scales(0.5, 3)
    spec = BlockSpec(0.5, scales, frequencies=[0.0] * 3, heads=heads)
    rep = verify_lower_bound_chain(spec, ConstantSignal(0.0))
    assert rep.first_failure == ("threshold_average", 0)


def test_correlated_signal_three_scales():
    scales, heads = minimal_scales(0.5, 3)
    spec = BlockSpec(0.5, scales, frequencies=[0.0] * 3, heads=heads)
    rep = verify_lower_bound_chain(spec, ConstantSignal(1.0))
    assert rep.passed
    assert rep.link("threshold_average", 0).measured == pytest.approx(1.0)
    assert min(rep.final_values()) >= 0.0025


def test_dense_matches_analytic_small_specs():
    spec = BlockSpec(0.4, [(2, 400), (3, 5000)], frequencies=[0.0, 0.0], heads=[1, 500])
    for c in (1.0, 0.8 - 0.3j, -0.6j):
        a = verify_lower_bound_chain(spec, ConstantSignal(c), backend="analytic")
        d = verify_lower_bound_chain(spec, ConstantSignal(c), backend="dense")
        assert a.beta == d.beta
        for la, ld in zip(a.links, d.links):
            assert (la.scale, la.name) == (ld.scale, ld.name)
            assert la.measured == pytest.approx(ld.measured, abs=1e-9)


def test_dense_phase_signal_structure():
    # signal e(-m alpha) against blocks e(n alpha + h alpha) correlates perfectly
    alpha, N, H = 0.1234, 3000, 4
    m = np.arange(N + H + 2)
    sig = np.exp(-2j * np.pi * m * alpha)
    n = np.arange(N + 1)
    spec = BlockSpec(0.5, [(H, N)], frequencies=[alpha], phases=[n * alpha], heads=[2])
    rep = verify_lower_bound_chain(spec, sig, backend="dense")
    assert rep.link("threshold_average", 0).measured == pytest.approx(1.0)
    assert rep.link("final_average", 0).passed


def test_dense_real_mobius_does_not_correlate():
    N, H = 20_000, 10
    table = sieve_mobius(1, N + H + 1)
    spec = BlockSpec(0.5, [(H, N)], frequencies=[0.0])
    rep = verify_lower_bound_chain(spec, table, backend="dense")
    assert rep.first_failure[0] in ("scale_growth_lower", "threshold_average")
    assert not rep.link("threshold_average", 0).passed


def test_dense_nil_variant_constant_first_coordinate():
    G = HEISENBERG
    N, H = 2000, 5
    spec = BlockSpec(0.5, [(H, N)], group=G, elements=[np.array([0.0, 0.37, 0.2])], x0=G.identity(), heads=[2])
    rep = verify_lower_bound_chain(spec, ConstantSignal(1.0), variant="nil", backend="dense")
    assert rep.link("threshold_average", 0).measured == pytest.approx(1.0)
    assert rep.link("block_sum", 0).passed


def test_signal_too_short_rejected():
    spec = BlockSpec(0.5, [(5, 100)], frequencies=[0.0])
    with pytest.raises(ValueError, match="too short"):
        verify_lower_bound_chain(spec, np.ones(50), backend="dense")


def test_analytic_rejects_nonconstant_data():
    spec = BlockSpec(0.5, [(5, 100)], frequencies=[0.3])
    with pytest.raises(ValueError):
        verify_lower_bound_chain(spec, ConstantSignal(1.0), backend="analytic")


@settings(max_examples=25, deadline=None)
@given(
    tau=st.floats(0.45, 0.95),
    H1=st.integers(1, 40),
    re=st.floats(-1, 1),
    im=st.floats(-1, 1),
)
def test_links_imply_final_bound(tau, H1, re, im):
    c = complex(re, im)
    if abs(c) > 1:
        c /= abs(c)
    scales, heads = minimal_scales(tau, 2, H1=H1)
    spec = BlockSpec(tau, scales, frequencies=[0.0, 0.0], heads=heads)
    rep = verify_lower_bound_chain(spec, ConstantSignal(c), backend="analytic")
    if rep.intermediate_passed:
        assert all(l.passed for l in rep.links if l.name == "final_average")
