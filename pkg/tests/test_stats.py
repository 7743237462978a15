import io
import math
from collections import defaultdict

import numpy as np
import pytest
from scipy import stats as sps

from ipdsaw import stats
from ipdsaw.errors import DomainError, ValidationError
from ipdsaw.model import critical_beta, make_params
from ipdsaw.rng import stream
from ipdsaw.walk import WalkPath

BETA_SIMPLE = 2.0 * math.log(2.0)  # x = 1/2, c = 3: exact hand arithmetic


# ---------------------------------------------------------------------------
# Tail exponent fit


def test_fit_table_mode_recovers_exact_power_law():
    n = np.geomspace(10, 1e4, 20)
    fit = stats.fit_tail_exponent((n, n ** -1.5), fit_range=(10, 1e4))
    assert abs(fit.exponent - 1.5) < 1e-12
    # every pairs-resample of exact power-law points gives the same slope
    assert fit.stderr < 1e-12
    assert fit.n_points == 20


def test_fit_samples_mode_recovers_synthetic_exponent():
    # X = U^-2 has P(X > t) = t^(-1/2), so the density decays like t^(-3/2)
    rng = stream(11)
    x = rng.uniform(size=300_000) ** -2.0
    fit = stats.fit_tail_exponent(x, fit_range=(10, 1e4), rng=stream(12))
    assert fit.n_points > 50_000
    assert abs(fit.exponent - 1.5) < max(0.05, 3 * fit.stderr)
    assert 0 < fit.stderr < 0.1


def test_fit_default_rng_is_deterministic():
    rng = stream(13)
    x = rng.uniform(size=20_000) ** -2.0
    a = stats.fit_tail_exponent(x, fit_range=(5, 500))
    b = stats.fit_tail_exponent(x, fit_range=(5, 500))
    assert a == b


def test_fit_rejects_bad_range_and_thin_samples():
    with pytest.raises(DomainError):
        stats.fit_tail_exponent(np.ones(5000), fit_range=(10, 5))
    with pytest.raises(DomainError):
        stats.fit_tail_exponent(np.full(5000, 2.0), fit_range=(10, 100))
    with pytest.raises(DomainError):
        stats.fit_tail_exponent((np.array([1.0, 2.0]), np.array([1.0, 0.5])), (1, 2))


# ---------------------------------------------------------------------------
# Distribution distances


def test_ks_two_sample_separates_and_matches():
    rng = stream(21)
    a = rng.normal(1.0, 1.0, 10_000)
    b = rng.normal(2.0, 1.0, 10_000)
    c = rng.normal(1.0, 1.0, 10_000)
    stat_far, p_far = stats.distribution_distance(a, b)
    assert p_far < 1e-6 and stat_far > 0.3
    _, p_near = stats.distribution_distance(a, c)
    assert p_near > 0.001


def test_ks_against_callable_cdf():
    rng = stream(22)
    a = rng.normal(1.0, 1.0, 5_000)
    _, p = stats.distribution_distance(a, sps.norm(1.0, 1.0).cdf)
    assert p > 0.001


def test_chi_square_pvalues_are_calibrated():
    # sampling from the reference pmf itself must give ~uniform p-values
    probs = np.array([0.3, 0.2, 0.15, 0.1, 0.08, 0.07, 0.05, 0.03, 0.015, 0.005])
    values = np.arange(10)
    pvals = []
    for seed in range(60):
        rng = stream(1000 + seed)
        sample = rng.choice(values, size=2_000, p=probs)
        _, p = stats.distribution_distance(sample, (values, probs), kind="chi_square")
        pvals.append(p)
    assert sps.kstest(pvals, "uniform").pvalue > 0.01


def test_chi_square_detects_wrong_pmf():
    values = np.arange(6)
    probs = np.full(6, 1 / 6)
    rng = stream(23)
    sample = rng.choice(values, size=5_000, p=[0.3, 0.3, 0.1, 0.1, 0.1, 0.1])
    _, p = stats.distribution_distance(sample, (values, probs), kind="chi_square")
    assert p < 1e-6


def test_chi_square_pools_rare_cells():
    # one cell with expected count far below 5 must be pooled, not divided by
    values = np.array([0, 1, 2])
    probs = np.array([0.499, 0.499, 0.002])
    rng = stream(24)
    sample = rng.choice(values, size=1_000, p=probs)
    stat, p = stats.distribution_distance(sample, (values, probs), kind="chi_square")
    assert np.isfinite(stat) and 0 <= p <= 1


def test_distance_validation_errors():
    with pytest.raises(ValidationError):
        stats.distribution_distance([], [1, 2, 3])
    with pytest.raises(ValidationError):
        stats.distribution_distance([1, 2], [1, 2], kind="wasserstein")
    with pytest.raises(ValidationError):
        stats.distribution_distance(
            [0, 5], (np.array([0, 1]), np.array([0.5, 0.5])), kind="chi_square"
        )
    with pytest.raises(ValidationError):
        stats.distribution_distance(
            [0, 1], (np.array([0, 1]), np.array([-0.5, 1.5])), kind="chi_square"
        )


# ---------------------------------------------------------------------------
# Excursion-weight collector


def exact_renewal_mass(params, n: int) -> float:
    """Exhaustive state sweep: probability that some partial excursion-weight
    sum equals n for the zero-start walk.  Feasible for small n because the
    clock gains at least 1 per step and at least |value| per visit."""
    x = math.exp(-params.beta / 2.0)

    def pmf(k: int) -> float:
        return x ** abs(k) / params.c_beta

    states = {(0, 0): 1.0}
    mass = 0.0
    while states:
        nxt = defaultdict(float)
        for (v, s), p in states.items():
            w_max = n - s - 1
            for w in range(-w_max, w_max + 1):
                q = p * pmf(w - v)
                s2 = s + 1 + abs(w)
                if v != 0 and v * w <= 0 and s2 == n:
                    mass += q
                elif s2 < n:
                    nxt[(w, s2)] += q
        states = nxt
    return mass


def test_first_excursion_weight_support_and_atom():
    params = make_params(BETA_SIMPLE)
    w = stats.excursion_weights(params, 30_000, stream(31), weight_cap=100_000)
    assert w.min() >= 3
    # weight 3 forces values (+-1, 0): probability 2 (x/c)^2 = 1/18 at x=1/2
    freq = np.mean(w == 3)
    se = math.sqrt(freq * (1 - freq) / len(w))
    assert abs(freq - 1.0 / 18.0) < 4 * se


def test_excursion_weight_exponent_reduced_run():
    params = make_params(critical_beta())
    w = stats.excursion_weights(params, 150_000, stream(32), weight_cap=100_000)
    fit = stats.fit_tail_exponent(w.astype(float), fit_range=(30, 3_000))
    assert abs(fit.exponent - 4.0 / 3.0) < 0.15


def test_excursion_weight_censoring_marks_lower_bounds():
    params = make_params(critical_beta())
    w = stats.excursion_weights(params, 5_000, stream(33), weight_cap=50)
    # censored rows carry the running weight at the crossing, never less
    assert np.all(w >= 3)
    assert np.any(w >= 50)
    with pytest.raises(DomainError):
        stats.excursion_weights(params, 0, stream(34))


# ---------------------------------------------------------------------------
# Renewal mass collector


def test_renewal_mass_matches_exhaustive_small_n():
    params = make_params(BETA_SIMPLE)
    n_vals, freq, se = stats.renewal_mass_table(
        params, stream(41), n_values=[3, 6, 9], n_replicas=8_000
    )
    exact3 = exact_renewal_mass(params, 3)
    assert abs(exact3 - 1.0 / 18.0) < 1e-12
    for j, n in enumerate(n_vals):
        exact = exact_renewal_mass(params, int(n))
        assert abs(freq[j] - exact) < 4 * max(se[j], 1e-4), (n, freq[j], exact)


def test_renewal_mass_exponent_reduced_run():
    params = make_params(critical_beta())
    n_vals, freq, _ = stats.renewal_mass_table(
        params,
        stream(42),
        n_values=np.unique(np.geomspace(30, 1_000, 10).astype(int)),
        n_replicas=6_000,
    )
    fit = stats.fit_tail_exponent((n_vals, freq), fit_range=(30, 1_000))
    assert abs(fit.exponent - 2.0 / 3.0) < 0.15


def test_renewal_mass_rejects_bad_indices():
    with pytest.raises(DomainError):
        stats.renewal_mass_table(make_params(1.0), stream(43), n_values=[0, 5])


# ---------------------------------------------------------------------------
# Terminal zero-run table


def test_yl_table_on_synthetic_geometric():
    rng = stream(51)
    y = rng.geometric(0.7, size=20_000) - 1  # P(y = k) = 0.7 * 0.3^k
    table = stats.yl_statistic(y)
    assert table.n_replicas == 20_000
    for k in range(3):
        target = 0.3 ** (k + 1)
        assert abs(table.survival[k] - target) < 5 * max(table.stderr[k], 1e-4)
    assert table.uniform_cutoff(0.05) == 2
    ratios = table.survival[1:3] / table.survival[0:2]
    assert np.all(np.abs(ratios - 0.3) < 0.1)


def test_yl_table_extracts_runs_from_walks():
    walks = [
        WalkPath([0, 1, 0, 0, 0]),  # run of 2 beyond the required zero
        WalkPath([0, 2, -1, 0]),  # run of 0
        WalkPath([0, 1, 0, 0]),  # run of 1
        WalkPath([0, -3, 1, 0, 0]),
    ]
    table = stats.yl_statistic(walks, min_replicas=4)
    assert table.n_replicas == 4
    # runs are (2, 0, 1, 1): three exceed 0, one exceeds 1
    assert table.survival[0] == pytest.approx(0.75)
    assert table.survival[1] == pytest.approx(0.25)
    assert table.k[-1] == 2


def test_yl_table_guards():
    with pytest.raises(DomainError):
        stats.yl_statistic(np.zeros(100, dtype=int))
    with pytest.raises(ValidationError):
        stats.yl_statistic(np.full(10_000, -1))
    # table truncated below the crossing point: no admissible cutoff
    table = stats.yl_statistic(np.full(10_000, 5), k_max=3)
    with pytest.raises(DomainError):
        table.uniform_cutoff()


# ---------------------------------------------------------------------------
# Shape experiment (smoke scale)


@pytest.fixture(scope="module")
def small_shape(tmp_path_factory):
    params = make_params(critical_beta())
    config = stats.ShapeConfig(
        lengths=(40, 80),
        replicas=12,
        seed_groups=2,
        master_seed=7,
        dt=2e-3,
        epsilon=0.25,
        harvest_n=60,
        harvest_seed=5,
        hausdorff_replicas=2,
        cache_dir=str(tmp_path_factory.mktemp("harvest-cache")),
    )
    return params, config, stats.shape_experiment(params, config)


def test_shape_rows_schema_and_invariants(small_shape):
    params, config, result = small_shape
    assert len(result.rows) == 4
    for row in result.rows:
        assert set(row) == set(stats._ROW_FIELDS)
        L = row["L"]
        assert row["area_ratio"] == pytest.approx((L + 1) / L, rel=1e-12)
        assert row["hausdorff_max"] <= L ** (-1 / 3)
        assert 0 < row["ks_extension"] <= 1
        assert row["replicas"] == config.replicas
    assert {row["L"] for row in result.rows} == {40, 80}
    assert {row["group"] for row in result.rows} == {0, 1}


def test_shape_experiment_is_deterministic(small_shape):
    params, config, result = small_shape
    again = stats.shape_experiment(params, config)
    assert again.rows == result.rows


def test_shape_manifest_and_csv(small_shape):
    params, config, result = small_shape
    m = result.manifest
    assert m["config"]["master_seed"] == 7
    assert m["sigma2"] == pytest.approx(params.sigma2)
    assert m["reference"]["n"] == 60
    assert m["seed_layout"]["sample_lane"] == 2
    buf = io.StringIO()
    result.to_csv(buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0].startswith("L,group,replicas,ks_extension")
    assert len(lines) == 5
    med = result.median_over_groups("extension_median")
    assert set(med) == {40, 80}
    assert med[40] > 0


def test_shape_config_guards():
    with pytest.raises(DomainError):
        stats.ShapeConfig(replicas=1)
    with pytest.raises(DomainError):
        stats.ShapeConfig(lengths=(5, 100))
