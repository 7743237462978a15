"""Rescaling oracles: composition identities, truncation hand cases, metric laws."""

import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipdsaw import model, rescaling, sampler, walk
from ipdsaw.errors import DomainError, RangeError
from ipdsaw.rng import stream

BETA_C = model.critical_beta()
CRIT = model.make_params(BETA_C)


def zero_walk(values):
    return walk.WalkPath(np.asarray(values, dtype=np.int64), start_law="zero")


HAND_WALK = zero_walk([0, 2, 1, -1, -3, 2, 0, 5, 0])  # clock tops out at 22


def test_flat_walk_rescales_to_zero():
    w = zero_walk([0] * 8)
    pair = rescaling.rescale_processes(w, 5, "tilde")
    np.testing.assert_array_equal(pair.profile.values, 0.0)
    np.testing.assert_array_equal(pair.com.values, 0.0)
    hat = rescaling.rescale_processes(w, 5, "hat")
    np.testing.assert_array_equal(hat.profile.values, 0.0)


def test_tilde_endpoint_value():
    L = 30
    s = sampler.sample_critical_walk(L, CRIT, stream(2))
    pair = rescaling.rescale_processes(s.walk, L, "tilde")
    _, xi = walk.area_clock(s.walk)
    expected = L ** (-1 / 3) * s.walk.values[xi(L)]
    assert pair.profile(1.0) == expected
    assert pair.profile.values[-1] == expected


def test_grid_requires_clock_to_reach_length():
    with pytest.raises(RangeError):
        rescaling.rescale_processes(zero_walk([0, 1]), 10, "tilde")


def test_hat_equals_tilde_after_time_change():
    # walk-time scaling == length-time scaling composed with the clock
    for L, seed in ((25, 3), (60, 4)):
        s = sampler.sample_critical_walk(L, CRIT, stream(seed))
        K, xi = walk.area_clock(s.walk)
        stop = xi(L)
        hat = rescaling.rescale_processes(s.walk, L, "hat")
        til = rescaling.rescale_processes(s.walk, L, "tilde")
        for j in range(stop + 1):
            s_point = K[j] / L
            assert hat.profile.values[j] == til.profile(s_point)
            assert hat.com.values[j] == til.com(s_point)


def test_polymer_variant_matches_hat_in_modulus():
    L = 40
    s = sampler.sample_critical_walk(L, CRIT, stream(6))
    hat = rescaling.rescale_processes(s.walk, L, "hat")
    poly = rescaling.rescale_processes(s.walk, L, "polymer")
    np.testing.assert_allclose(poly.profile.values, np.abs(hat.profile.values), atol=0)
    np.testing.assert_allclose(poly.com.values, hat.com.values, atol=1e-12)
    assert poly.profile.grid_step == hat.profile.grid_step


def test_hopping_grid_telescopes():
    L = 30
    s = sampler.sample_critical_walk(L, CRIT, stream(7))
    K, xi = walk.area_clock(s.walk)
    stop = xi(L)
    # consecutive hopping points differ by (1 + |V_j|)/L and invert exactly
    for j in range(1, stop + 1):
        assert K[j] - K[j - 1] == 1 + abs(int(s.walk.values[j]))
        assert xi(K[j]) == j


def test_truncation_suppresses_everything_below_threshold():
    pair = rescaling.truncate_discrete(HAND_WALK, 20, 2)  # threshold 10 > all X
    np.testing.assert_array_equal(pair.profile.values, 0.0)
    np.testing.assert_array_equal(pair.com.values, 0.0)
    assert pair.variant == "truncated"


def test_truncation_keeps_everything_above_threshold():
    # threshold 1: every excursion fires, so the pair equals the tilde pair
    pair = rescaling.truncate_discrete(HAND_WALK, 20, 20)
    til = rescaling.rescale_processes(HAND_WALK, 20, "tilde")
    np.testing.assert_array_equal(pair.com.values, til.com.values)
    np.testing.assert_array_equal(pair.profile.values, til.profile.values)


def test_truncation_hand_case_mixed():
    # threshold 5 with k*X >= L: keeps the weight-7 excursions, drops weight 1
    L, k = 20, 4
    pair = rescaling.truncate_discrete(HAND_WALK, L, k)
    til = rescaling.rescale_processes(HAND_WALK, L, "tilde")
    _, xi = walk.area_clock(HAND_WALK)
    idx = xi(np.arange(L + 1))
    small = (idx == 6)  # index 6 is the weight-1 excursion (5 -> 0 crossing)
    np.testing.assert_array_equal(pair.profile.values[~small], til.profile.values[~small])
    # the dropped excursion zeroes the profile; its value there was 0 anyway
    np.testing.assert_array_equal(pair.profile.values[small], 0.0)


def test_truncation_exact_boundary_comparison():
    # weight 7 against threshold 7 stays in; against threshold 8 it drops
    at_boundary = rescaling.truncate_discrete(HAND_WALK, 7, 1)
    assert np.any(at_boundary.profile.values != 0.0)
    just_below = rescaling.truncate_discrete(HAND_WALK, 8, 1)
    np.testing.assert_array_equal(just_below.profile.values, 0.0)


def test_truncated_open_excursion_uses_running_weight():
    # walk ends mid-excursion; indices enter once the partial weight clears
    w = zero_walk([0, 1, 0, 4, 4, 4])
    # closed excursion: X = 3; open tail running weights 5, 10, 15 at 3, 4, 5
    pair = rescaling.truncate_discrete(w, 10, 1)
    _, xi = walk.area_clock(w)
    idx = xi(np.arange(11))
    np.testing.assert_array_equal(pair.profile.values[idx <= 3], 0.0)
    assert np.all(pair.profile.values[idx == 4] != 0.0)


def test_omitted_mass_is_monotone_in_k():
    # the retained set grows with k, so the dropped |M^exc| mass shrinks
    s = sampler.sample_critical_walk(400, CRIT, stream(11))
    dec = walk.decompose_excursions(s.walk)
    M = walk.center_of_mass(s.walk)
    m_exc = np.abs(M[dec.taus[1:]] - M[dec.taus[:-1]])
    masses = []
    for k in (1, 2, 4, 8, 16):
        omitted = k * dec.weights < 400
        masses.append(m_exc[omitted].sum())
    assert all(a >= b for a, b in zip(masses, masses[1:]))


def test_truncation_gap_quantile_decreases_statistically():
    # under the renewal conditioning the sup gap shrinks as k grows
    L = 1500
    reps = 120
    samples = sampler.sample_renewal_conditioned_many(L, CRIT, stream(13), reps)
    sups = {k: [] for k in (2, 16, 64)}
    for s in samples:
        til = rescaling.rescale_processes(s.walk, L, "tilde")
        for k in sups:
            trunc = rescaling.truncate_discrete(s.walk, L, k)
            sups[k].append(rescaling.sup_distance(til.com, trunc.com))
    q = {k: float(np.quantile(v, 0.9)) for k, v in sups.items()}
    assert q[2] > q[16] > q[64]


def test_interpolation_properties():
    f = rescaling.StepFunction(0.25, np.array([0.0, 1.0, 1.0, 3.0, 2.0]))
    lin = rescaling.interpolate(f)
    assert lin(0.125) == pytest.approx(0.5)
    assert lin(0.25) == pytest.approx(1.0)
    const = rescaling.StepFunction(0.5, np.array([2.0, 2.0, 2.0]))
    lin_const = rescaling.interpolate(const)
    for s in np.linspace(0, 1, 17):
        assert lin_const(s) == 2.0
    dense = np.linspace(0, 1, 1001)
    max_jump = np.abs(np.diff(f.values)).max()
    assert np.max(np.abs(lin(dense) - f(dense))) <= max_jump + 1e-12


def test_sup_distance_basics():
    f = rescaling.StepFunction(0.5, np.array([0.0, 0.0, 0.0]))
    g = rescaling.StepFunction(0.5, np.array([1.5, 1.5, 1.5]))
    assert rescaling.sup_distance(f, f) == 0.0
    assert rescaling.sup_distance(f, g) == 1.5
    with pytest.raises(DomainError):
        rescaling.sup_distance(f, rescaling.StepFunction(0.25, np.zeros(5)))
    with pytest.raises(DomainError):
        rescaling.sup_distance(f, rescaling.StepFunction(0.5, np.zeros(3), "half_line"))


def test_half_line_metric_saturates_at_one():
    f = rescaling.StepFunction(0.5, np.zeros(3), "half_line")
    g = rescaling.StepFunction(0.5, np.full(3, 9.0), "half_line")
    d = rescaling.sup_distance(f, g)
    assert d == pytest.approx(1.0 - 2.0 ** (-rescaling.METRIC_TERMS), abs=1e-15)


def test_half_line_metric_compares_stopped_tails():
    # shorter process continues at its last value
    f = rescaling.StepFunction(0.5, np.array([0.0, 1.0]), "half_line")
    g = rescaling.StepFunction(0.5, np.array([0.0, 1.0, 1.0, 1.0]), "half_line")
    assert rescaling.sup_distance(f, g) == 0.0


values_arrays = st.lists(
    st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=3, max_size=3
)


@given(values_arrays, values_arrays, values_arrays)
def test_sup_distance_triangle_inequality(a, b, c):
    fa = rescaling.StepFunction(0.5, np.array(a))
    fb = rescaling.StepFunction(0.5, np.array(b))
    fc = rescaling.StepFunction(0.5, np.array(c))
    d = rescaling.sup_distance
    assert d(fa, fc) <= d(fa, fb) + d(fb, fc) + 1e-12


def test_step_function_csv_export():
    f = rescaling.StepFunction(0.5, np.array([0.0, 1.0, 2.0]))
    buf = io.StringIO()
    f.to_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines == ["0,0", "0.5,1", "1,2"]
