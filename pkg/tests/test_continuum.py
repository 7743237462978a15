"""Continuum oracles: Gaussian moments, clock inversion, squared-bridge
marginal law for the radial route, and engine-vs-reference agreement."""

import io

import numpy as np
import pytest
from scipy import stats

from ipdsaw import continuum
from ipdsaw.errors import DomainError, RangeError, ValidationError
from ipdsaw.rng import stream

COARSE = dict(dt=2e-3, epsilon=0.25)  # cheap acceptance for machinery tests


def coarse_sample(seed, sigma2=1.0, **overrides):
    kw = {**COARSE, **overrides}
    return continuum.sample_conditioned_limit(sigma2, rng=stream(seed), **kw)


def test_bm_starts_at_zero_and_variance():
    rng = stream(21)
    ends = np.array(
        [continuum.simulate_bm(2.5, 0.01, 1.0, rng).values[-1] for _ in range(3000)]
    )
    assert continuum.simulate_bm(1.0, 0.01, 1.0, stream(1)).values[0] == 0.0
    assert np.var(ends) == pytest.approx(2.5, rel=0.05)


def test_bm_increments_are_gaussian():
    path = continuum.simulate_bm(3.0, 1e-3, 10.0, stream(22))
    inc = np.diff(path.values)
    res = stats.kstest(inc, stats.norm(scale=np.sqrt(3.0 * 1e-3)).cdf)
    assert res.pvalue > 0.001


def test_bm_scaling_covariance_exact():
    a = continuum.simulate_bm(1.0, 1e-3, 0.5, stream(23)).values
    b = continuum.simulate_bm(4.0, 1e-3, 0.5, stream(23)).values
    np.testing.assert_allclose(b, 2.0 * a, rtol=1e-12)


def test_area_of_constant_path():
    path = continuum.GridPath(0.1, np.full(11, -3.0), 1.0)
    A, inv = continuum.area_and_inverse(path)
    np.testing.assert_allclose(A, 3.0 * path.times, rtol=1e-12)
    assert inv(0) == 0.0
    assert inv(1.5) == pytest.approx(0.5)
    with pytest.raises(RangeError):
        inv(3.1)


def test_clock_inversion_within_one_cell():
    path = continuum.simulate_bm(1.0, 1e-3, 2.0, stream(24))
    A, inv = continuum.area_and_inverse(path)
    assert np.all(np.diff(A) >= 0)
    for t in np.linspace(0.1, 2.0, 23):
        assert abs(inv(A[int(t / path.dt)]) - t) <= path.dt + 1e-12


def test_conditioned_sample_invariants():
    s = coarse_sample(31)
    assert abs(s.profile_marginal(1.0)) <= s.epsilon
    assert s.area[-1] >= 1.0 > s.area[-2]
    assert s.area[-1] - 1.0 <= s.B.dt * np.abs(s.B.values).max() + 1e-12
    assert 0 < s.a1 <= s.B.times[-1] + 1e-12
    assert len(s.D.values) == len(s.B.values)
    assert s.attempts >= 1
    assert s.profile_marginal(0.0) == 0.0
    with pytest.raises(RangeError):
        s.profile_marginal(1.2)


def test_conditioned_sample_deterministic_in_seed():
    a = coarse_sample(32)
    b = coarse_sample(32)
    np.testing.assert_array_equal(a.B.values, b.B.values)
    assert a.attempts == b.attempts and a.a1 == b.a1


def test_a1_mean_is_stable():
    a1 = np.array([coarse_sample(200 + i).a1 for i in range(40)])
    se = a1.std(ddof=1) / np.sqrt(len(a1))
    assert np.isfinite(a1.mean()) and se < 0.5 * a1.mean()


def test_budget_error_reports_attempts():
    from ipdsaw.errors import BudgetError

    with pytest.raises(BudgetError) as err:
        continuum.sample_conditioned_limit(
            1.0, dt=2e-3, epsilon=1e-6, rng=stream(33), attempt_budget=3
        )
    assert err.value.attempts == 3


def test_bessel_path_shape():
    y = continuum.sample_Y_bessel(1e-3, stream(41))
    assert y.values[0] == 0.0 and y.values[-1] == 0.0
    assert np.all(y.values >= 0.0)
    assert len(y.values) == 1001


def test_bessel_marginal_matches_squared_bridge_law():
    # radius^2 of a 0->0 Bessel bridge at time t is t(1-t) chi-square(4/3),
    # so Y^3 = ((3/2) rho)^2 is Gamma(2/3, scale 4.5 t(1-t))
    n, dt = 4000, 2e-4
    Y = continuum.bessel_marginals(n, dt, (0.25, 0.5, 0.75), stream(42))
    for i, t in enumerate((0.25, 0.5, 0.75)):
        law = stats.gamma(a=2.0 / 3.0, scale=4.5 * t * (1.0 - t))
        res = stats.kstest(Y[:, i] ** 3, law.cdf)
        assert res.statistic < 0.04, f"t={t}: KS {res.statistic:.4f}"


def test_bessel_marginals_match_full_paths():
    dt = 1e-3
    cols = continuum.bessel_marginals(1500, dt, (0.5,), stream(43))
    full = continuum.bessel_profile_batch(1500, dt, stream(43))
    np.testing.assert_array_equal(cols[:, 0], full[:, 500])


def test_s_crit_region_geometry():
    s = coarse_sample(51, dt=5e-4)
    region = continuum.build_S_crit(s)
    x0, x1, _, _ = region.bounds
    assert x0 == 0.0 and x1 == pytest.approx(s.a1, abs=1e-12)
    assert region.area == pytest.approx(1.0, abs=0.02)


def test_s_crit_symmetric_when_drift_is_zero():
    s = coarse_sample(52)
    flat = continuum.LimitSample(
        B=s.B,
        D=continuum.GridPath(s.D.dt, np.zeros_like(s.D.values), s.D.variance_rate),
        area=s.area,
        a1=s.a1,
        epsilon=s.epsilon,
    )
    region = continuum.build_S_crit(flat)
    np.testing.assert_allclose(region.boxes[:, 2], -region.boxes[:, 3], atol=1e-15)


def test_truncation_drops_everything_below_threshold():
    # injected ripple: every excursion sweeps ~8e-4, far below 1/100
    dt = 1e-3
    t = dt * np.arange(35001)
    b = 0.05 * np.sin(2 * np.pi * 20 * t)
    absb = np.abs(b)
    area = np.concatenate([[0.0], np.cumsum(0.5 * dt * (absb[1:] + absb[:-1]))])
    assert area[-1] > 1.0
    stop = int(np.searchsorted(area, 1.0)) + 1
    sample = continuum.LimitSample(
        B=continuum.GridPath(dt, b[:stop], 1.0),
        D=continuum.GridPath(dt, np.linspace(0, 1, stop), 1.0),
        area=area[:stop],
        a1=dt * (stop - 1),
        epsilon=0.1,
    )
    bk, dk = continuum.truncate_continuum(sample, 100)
    np.testing.assert_array_equal(bk.values, 0.0)
    np.testing.assert_array_equal(dk.values, 0.0)


def test_truncation_support_grows_with_k():
    s = coarse_sample(53)
    b2, _ = continuum.truncate_continuum(s, 2)
    b8, _ = continuum.truncate_continuum(s, 8)
    assert np.all((b2.values != 0) <= (b8.values != 0))


def test_truncation_gap_quantile_decreases():
    sups = {k: [] for k in (2, 8, 32)}
    for i in range(40):
        s = coarse_sample(300 + i)
        _, d_ref = continuum.truncate_continuum(s, 10**9)
        for k in sups:
            _, dk = continuum.truncate_continuum(s, k)
            sups[k].append(np.max(np.abs(d_ref.values - dk.values)))
    q = {k: np.quantile(v, 0.9) for k, v in sups.items()}
    assert q[2] > q[8] > q[32]


def test_sample_csv_export():
    s = coarse_sample(54)
    buf = io.StringIO()
    continuum.sample_to_csv(s, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,B,D,A"
    assert len(lines) == len(s.B.values) + 1
    t0, b0, d0, a0 = map(float, lines[1].split(","))
    assert (t0, b0, d0, a0) == (0.0, 0.0, 0.0, 0.0)


def test_harvest_agrees_with_reference_sampler():
    hv = continuum.harvest_conditioned(
        n_accepted=150, dt=2e-3, epsilon=0.25, seed=7, refine=5
    )
    ref = np.array([coarse_sample(400 + i).a1 for i in range(150)])
    res = stats.ks_2samp(hv.a1, ref)
    assert res.pvalue > 0.001
    assert np.all(hv.max_abs >= np.abs(hv.profile).max(axis=1) - 1e-12)


def test_harvest_cache_roundtrip(tmp_path):
    kw = dict(n_accepted=25, dt=2e-3, epsilon=0.2, seed=9, refine=5)
    first = continuum.harvest_conditioned(cache_dir=tmp_path, **kw)
    again = continuum.harvest_conditioned(cache_dir=tmp_path, **kw)
    np.testing.assert_array_equal(first.a1, again.a1)
    np.testing.assert_array_equal(first.profile, again.profile)
    assert first.attempts == again.attempts
    assert len(list(tmp_path.glob("*.npz"))) == 1


def test_harvest_scaled_view():
    hv = continuum.harvest_conditioned(n_accepted=25, dt=2e-3, epsilon=0.2, seed=9, refine=5)
    c = np.sqrt(5.0)
    view = hv.scaled_view(5.0)
    np.testing.assert_allclose(view["a1"], hv.a1 * c ** (-2 / 3), rtol=1e-12)
    np.testing.assert_allclose(view["profile"], hv.profile * c ** (2 / 3), rtol=1e-12)
    assert view["epsilon"] == pytest.approx(0.2 * c ** (2 / 3))
    with pytest.raises(ValidationError):
        continuum.ConditionedHarvest(
            sigma2=2.0,
            dt=hv.dt,
            epsilon=hv.epsilon,
            seed=hv.seed,
            attempts=hv.attempts,
            marginal_fracs=hv.marginal_fracs,
            profile=hv.profile,
            a1=hv.a1,
            max_abs=hv.max_abs,
            coarse_end=hv.coarse_end,
            lane=hv.lane,
        ).scaled_view(1.0)


def test_harvest_leak_report_keys():
    hv = continuum.harvest_conditioned(n_accepted=25, dt=2e-3, epsilon=0.2, seed=9, refine=5)
    rep = hv.leak_report()
    assert set(rep) >= {"wide_accepts", "estimated_leak_fraction", "band"}
    assert rep["estimated_leak_fraction"] >= 0.0


def test_domain_errors():
    with pytest.raises(DomainError):
        continuum.simulate_bm(-1.0, 0.01, 1.0, stream(0))
    with pytest.raises(DomainError):
        continuum.sample_conditioned_limit(1.0, dt=0.0)
    with pytest.raises(DomainError):
        continuum.bessel_profile_batch(2, 0.9, stream(0))
    s = coarse_sample(55)
    with pytest.raises(DomainError):
        continuum.truncate_continuum(s, 0)
