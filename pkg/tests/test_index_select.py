import numpy as np
import pytest

from nutslab import (
    IndexInterval,
    Orbit,
    PhasePoint,
    bps_pmf,
    bps_sample_online,
    index_set_from_bits,
    multinomial_pmf,
    progress_ratio,
    sample_orbit,
    std_gaussian,
)
from nutslab.index_select import _level_intervals, _softmax, bps_trace


def make_orbit(log_weights, bits, stopped_by="max-depth"):
    """Synthetic orbit with prescribed log-weights and construction bits."""
    bits = tuple(bits)
    depth = len(bits)
    iv = index_set_from_bits(bits, depth)
    lw = np.asarray(log_weights, dtype=np.float64)
    assert lw.shape[0] == iv.size
    if depth == 0:
        last = None
    else:
        old = index_set_from_bits(bits, depth - 1)
        if bits[-1] == 0:
            last = IndexInterval(old.hi + 1, old.hi + old.size)
        else:
            last = IndexInterval(old.lo - old.size, old.lo - 1)
    d = 1
    qs = np.zeros((iv.size, d))
    ps = np.zeros((iv.size, d))
    return Orbit(anchor=PhasePoint(np.zeros(d), np.zeros(d)), interval=iv,
                 qs=qs, ps=ps, log_weights=lw, bits=bits, depth=depth,
                 last_half=last, stopped_by=stopped_by, diverged=False,
                 n_grad=iv.size)


def bps_pmf_by_recursion(orbit):
    """Independent oracle: evaluate the two-branch recursion level by level."""
    lo = orbit.interval.lo
    lw = orbit.log_weights
    pmf = np.zeros(orbit.size)
    pmf[0 - lo] = 1.0
    for old, new in _level_intervals(orbit.bits, orbit.depth):
        r = progress_ratio(lw[old.lo - lo: old.hi - lo + 1],
                           lw[new.lo - lo: new.hi - lo + 1])
        nxt = (1.0 - r) * pmf
        sl = slice(new.lo - lo, new.hi - lo + 1)
        nxt[sl] += r * _softmax(lw[sl])
        pmf = nxt
    return pmf


def test_progress_ratio_examples():
    assert progress_ratio([0.0, 0.0], [0.0, 0.0]) == pytest.approx(1.0)
    assert progress_ratio([0.0, 0.0], [-np.log(2)] * 2) == pytest.approx(0.5)
    assert progress_ratio([0.0], [np.log(10.0)]) == 1.0
    with pytest.raises(ValueError):
        progress_ratio([], [0.0])


def test_multinomial_examples():
    uniform = multinomial_pmf(make_orbit(np.full(4, -1.3), [0, 0]))
    np.testing.assert_allclose(uniform.probs, 0.25)
    single = multinomial_pmf(make_orbit([0.0], []))
    np.testing.assert_allclose(single.probs, [1.0])
    two = multinomial_pmf(make_orbit([0.0, -np.log(3.0)], [0]))
    np.testing.assert_allclose(two.probs, [0.75, 0.25])


def test_bps_ideal_case_uniform_on_last_half():
    orb = make_orbit(np.zeros(8), [0, 1, 0])
    pmf = bps_pmf(orb)
    last = orb.last_half
    for j in orb.interval.indices():
        expected = 1.0 / last.size if j in last else 0.0
        assert pmf.prob(int(j)) == pytest.approx(expected, abs=1e-12)


def test_bps_depth_zero_is_point_mass():
    pmf = bps_pmf(make_orbit([-2.0], []))
    np.testing.assert_allclose(pmf.probs, [1.0])


def test_bps_depth_two_hand_case():
    # weights w0..w3 on [0:3] via bits (0,0): levels R0 = 1^(w1/w0),
    # R1 = 1^((w2+w3)/(w0+w1))
    w = np.array([1.0, 0.6, 0.3, 0.9])
    orb = make_orbit(np.log(w), [0, 0])
    r0 = min(1.0, w[1] / w[0])
    r1 = min(1.0, (w[2] + w[3]) / (w[0] + w[1]))
    expected = np.array([
        (1 - r0) * (1 - r1),
        r0 * (1 - r1),
        r1 * w[2] / (w[2] + w[3]),
        r1 * w[3] / (w[2] + w[3]),
    ])
    np.testing.assert_allclose(bps_pmf(orb).probs, expected, atol=1e-14)
    np.testing.assert_allclose(bps_pmf_by_recursion(orb), expected, atol=1e-14)


def test_bps_matches_recursion_oracle(rng):
    for _ in range(50):
        depth = int(rng.integers(1, 5))
        bits = rng.integers(0, 2, depth)
        lw = rng.standard_normal(2**depth) * 2.0
        orb = make_orbit(lw, bits)
        np.testing.assert_allclose(bps_pmf(orb).probs, bps_pmf_by_recursion(orb),
                                   atol=1e-12)


def test_pmfs_sum_to_one_on_random_orbits(rng):
    for _ in range(1000):
        depth = int(rng.integers(0, 5))
        bits = rng.integers(0, 2, depth)
        lw = rng.standard_normal(2**depth) * 100.0
        orb = make_orbit(lw, bits)
        assert abs(multinomial_pmf(orb).probs.sum() - 1.0) <= 1e-12
        assert abs(bps_pmf(orb).probs.sum() - 1.0) <= 1e-12


def test_eq4_terms_are_disjoint(rng):
    # every index is covered by exactly one level term (plus the residual at 0)
    for _ in range(50):
        depth = int(rng.integers(1, 6))
        bits = tuple(rng.integers(0, 2, depth))
        levels = _level_intervals(bits, depth)
        seen = set()
        for _, new in levels:
            ids = set(range(new.lo, new.hi + 1))
            assert not (seen & ids)
            seen |= ids
        full = index_set_from_bits(bits, depth)
        assert seen | {0} == set(range(full.lo, full.hi + 1))


def test_energy_bounded_selection_mass(rng):
    # |H_j - H_0| <= Delta forces near-uniform ideal parts:
    # 1 - |I_last| min bps <= 4 Delta and 1 - |I| min mul <= 2 Delta
    for delta in (0.01, 0.1):
        for _ in range(200):
            depth = int(rng.integers(1, 5))
            bits = rng.integers(0, 2, depth)
            lw = rng.uniform(-delta, delta, 2**depth)
            lw[0 - index_set_from_bits(bits, depth).lo] = 0.0
            orb = make_orbit(lw, bits)
            mul = multinomial_pmf(orb)
            assert 1.0 - orb.size * np.min(mul.probs) <= 2 * delta + 1e-12
            bps = bps_pmf(orb)
            last = orb.last_half
            sl = slice(last.lo - orb.interval.lo, last.hi - orb.interval.lo + 1)
            assert 1.0 - last.size * np.min(bps.probs[sl]) <= 4 * delta + 1e-12


def test_log_weight_shift_invariance(rng):
    for _ in range(20):
        depth = int(rng.integers(1, 5))
        bits = rng.integers(0, 2, depth)
        lw = rng.standard_normal(2**depth)
        a, b = make_orbit(lw, bits), make_orbit(lw + 700.0, bits)
        np.testing.assert_allclose(multinomial_pmf(a).probs,
                                   multinomial_pmf(b).probs, atol=1e-12)
        np.testing.assert_allclose(bps_pmf(a).probs, bps_pmf(b).probs, atol=1e-12)


def test_online_sampler_depth_zero():
    assert bps_sample_online(make_orbit([0.0], []), []) == 0


def test_online_sampler_matches_pmf(rng):
    # distributional equality of the online path and the expanded form
    n = 100_000
    worst = 0.0
    for trial in range(20):
        depth = int(rng.integers(1, 5))
        bits = rng.integers(0, 2, depth)
        lw = rng.standard_normal(2**depth)
        orb = make_orbit(lw, bits)
        pmf = bps_pmf(orb)
        us = rng.random((n, 2 * depth))
        js = bps_sample_online(orb, us)
        # the batch path must agree with the scalar path draw for draw
        for i in range(0, n, 25_000):
            assert bps_sample_online(orb, us[i]) == js[i]
        counts = np.bincount(js - orb.interval.lo, minlength=orb.size)
        tv = 0.5 * np.abs(counts / n - pmf.probs).sum()
        worst = max(worst, tv)
    assert worst <= 0.01


def test_online_sampler_constant_h_uniform_on_last(rng):
    from scipy.stats import chisquare
    orb = make_orbit(np.zeros(4), [1, 0])
    n = 100_000
    js = bps_sample_online(orb, rng.random((n, 4)))
    last = orb.last_half
    assert set(np.unique(js)) == set(range(last.lo, last.hi + 1))
    stat = chisquare(np.bincount(js - last.lo))
    assert stat.pvalue > 0.001


def test_selection_over_real_orbit(rng):
    t = std_gaussian(2)
    orb = sample_orbit(t, PhasePoint(rng.standard_normal(2), rng.standard_normal(2)),
                       0.3, 4, rng)
    tr = bps_trace(orb)
    assert len(tr.levels) == orb.depth
    for lv in tr.levels:
        assert 0.0 <= lv.ratio <= 1.0
