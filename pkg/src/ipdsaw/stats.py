"""Statistical harness: tail-exponent fits, distribution distances, excursion
and renewal collectors, terminal-zero-run tables, and the shape-convergence
experiment against the continuum reference.

Everything here is deterministic given the seeds it is handed: collectors take
explicit generators, the shape experiment derives all of its streams from the
master seed in its config, and bootstrap resampling uses a fixed internal
stream unless one is supplied.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps

from . import __version__, geometry
from .continuum import harvest_conditioned
from .errors import DomainError, ValidationError
from .model import ModelParams, stretches_to_lattice, walk_to_stretches
from .rng import LANE_STRIDE, stream
from .sampler import sample_critical_walk_many, trailing_zero_run
from .walk import center_of_mass, sample_increments

__all__ = [
    "TailFit",
    "fit_tail_exponent",
    "distribution_distance",
    "excursion_weights",
    "renewal_mass_table",
    "YlTable",
    "yl_statistic",
    "ShapeConfig",
    "ShapeResult",
    "shape_experiment",
]

MIN_FIT_SAMPLES = 1000
POOL_MIN_EXPECTED = 5.0


# ---------------------------------------------------------------------------
# Tail exponent fit


@dataclass(frozen=True)
class TailFit:
    """Power-law decay exponent alpha (mass ~ n^-alpha) with bootstrap error."""

    exponent: float
    stderr: float
    n_points: int
    n_cells: int


def _fit_loglog(log_n: np.ndarray, log_mass: np.ndarray) -> float:
    slope = np.polyfit(log_n, log_mass, 1)[0]
    return -float(slope)


def fit_tail_exponent(
    data,
    fit_range,
    n_bins: int = 24,
    n_bootstrap: int = 200,
    rng: np.random.Generator | None = None,
) -> TailFit:
    """Least-squares decay exponent of log mass against log n over fit_range.

    data is either a 1-d array of positive samples (binned geometrically into
    an empirical density) or a pair (n_values, masses) of already-tabulated
    frequencies.  The returned exponent is positive for decaying mass; stderr
    is the standard deviation of the exponent over bootstrap resamples.
    """
    lo, hi = float(fit_range[0]), float(fit_range[1])
    if not 0 < lo < hi:
        raise DomainError(f"fit range must satisfy 0 < lo < hi, got {fit_range}")
    if rng is None:
        rng = stream(0, 17 * LANE_STRIDE)

    if isinstance(data, tuple) and len(data) == 2:
        n_vals = np.asarray(data[0], dtype=float)
        masses = np.asarray(data[1], dtype=float)
        keep = (n_vals >= lo) & (n_vals <= hi) & (masses > 0)
        n_vals, masses = n_vals[keep], masses[keep]
        if len(n_vals) < 4:
            raise DomainError("insufficient table cells inside the fit range")
        log_n, log_m = np.log(n_vals), np.log(masses)
        exponent = _fit_loglog(log_n, log_m)
        boot = np.empty(n_bootstrap)
        for b in range(n_bootstrap):
            pick = rng.integers(0, len(log_n), len(log_n))
            if len(np.unique(log_n[pick])) < 2:
                boot[b] = exponent
                continue
            boot[b] = _fit_loglog(log_n[pick], log_m[pick])
        return TailFit(exponent, float(boot.std(ddof=1)), len(n_vals), len(n_vals))

    x = np.asarray(data, dtype=float).ravel()
    in_range = (x >= lo) & (x <= hi)
    n_in = int(in_range.sum())
    if n_in < MIN_FIT_SAMPLES:
        raise DomainError(
            f"need at least {MIN_FIT_SAMPLES} samples inside the fit range, got {n_in}"
        )
    edges = np.geomspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(x[in_range], bins=edges)
    widths = np.diff(edges)
    centers = np.sqrt(edges[:-1] * edges[1:])
    total = len(x)

    def exponent_of(cnt: np.ndarray) -> float:
        keep = cnt > 0
        if keep.sum() < 2:
            return np.nan
        dens = cnt[keep] / (total * widths[keep])
        return _fit_loglog(np.log(centers[keep]), np.log(dens))

    exponent = exponent_of(counts)
    probs = counts / n_in
    boot = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        boot[b] = exponent_of(rng.multinomial(n_in, probs))
    boot = boot[np.isfinite(boot)]
    stderr = float(boot.std(ddof=1)) if len(boot) > 1 else float("nan")
    return TailFit(float(exponent), stderr, n_in, int((counts > 0).sum()))


# ---------------------------------------------------------------------------
# Distribution distances


def _pooled_cells(observed: np.ndarray, expected: np.ndarray):
    """Merge cells, smallest expected first, until every pool expects >= 5."""
    order = np.argsort(expected)
    pools_obs, pools_exp = [], []
    acc_o = acc_e = 0.0
    for i in order:
        acc_o += observed[i]
        acc_e += expected[i]
        if acc_e >= POOL_MIN_EXPECTED:
            pools_obs.append(acc_o)
            pools_exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        if pools_exp:
            pools_obs[-1] += acc_o
            pools_exp[-1] += acc_e
        else:
            pools_obs.append(acc_o)
            pools_exp.append(acc_e)
    return np.asarray(pools_obs), np.asarray(pools_exp)


def distribution_distance(sample, ref, kind: str = "ks"):
    """(statistic, p_value) between a sample and a reference.

    kind "ks": two-sample Kolmogorov-Smirnov when ref is an array (scipy's
    auto method, which switches to the exact tie-aware computation at small
    sizes), one-sample against ref when it is a callable cdf.
    kind "chi_square": goodness of fit of an integer/categorical sample
    against a pmf given as (values, probabilities); cells are pooled smallest
    expected count first until each pool expects at least 5.
    """
    a = np.asarray(sample).ravel()
    if a.size == 0:
        raise ValidationError("empty sample")
    if kind == "ks":
        if callable(ref):
            res = sps.kstest(a, ref)
        else:
            b = np.asarray(ref).ravel()
            if b.size == 0:
                raise ValidationError("empty reference sample")
            res = sps.ks_2samp(a, b)
        return float(res.statistic), float(res.pvalue)
    if kind == "chi_square":
        values, probs = ref
        values = np.asarray(values)
        probs = np.asarray(probs, dtype=float)
        if np.any(probs < 0) or probs.sum() <= 0:
            raise ValidationError("reference pmf must be nonnegative with positive mass")
        lookup = {v: i for i, v in enumerate(values.tolist())}
        idx = np.array([lookup.get(v, -1) for v in a.tolist()])
        if np.any(idx < 0):
            raise ValidationError("sample value outside the reference support")
        observed = np.bincount(idx, minlength=len(values)).astype(float)
        expected = probs / probs.sum() * len(a)
        obs, exp = _pooled_cells(observed, expected)
        if len(obs) < 2:
            raise ValidationError("fewer than two cells after pooling")
        stat = float(np.sum((obs - exp) ** 2 / exp))
        p = float(sps.chi2.sf(stat, df=len(obs) - 1))
        return stat, p
    raise ValidationError(f"unknown distance kind {kind!r}")


# ---------------------------------------------------------------------------
# Excursion-weight and renewal-mass collectors


def excursion_weights(
    params: ModelParams,
    n_excursions: int,
    rng: np.random.Generator,
    weight_cap: int = 200_000,
    row_batch: int = 65536,
    chunk_cols: int = 64,
) -> np.ndarray:
    """First-excursion weights of independent zero-start walks, censored at
    weight_cap.

    Exactly one excursion per replica, and every replica runs until its own
    excursion closes or its running weight (length plus swept modulus)
    reaches the cap.  Harvesting several excursions per replica under a
    global count cutoff would discard the still-open, disproportionately
    heavy ones and bias the tail.  Entries below weight_cap are exact
    weights; entries at or above it are lower bounds for excursions open at
    the cap, so keep fit ranges below weight_cap.  Weights have infinite
    mean, which is why an uncensored collector would not terminate.
    """
    if n_excursions < 1 or weight_cap < 1:
        raise DomainError("need n_excursions >= 1 and weight_cap >= 1")
    out = np.empty(n_excursions, dtype=np.int64)
    done_total = 0
    while done_total < n_excursions:
        block = min(row_batch, n_excursions - done_total)
        v_prev = np.zeros(block, dtype=np.int64)
        weight = np.zeros(block, dtype=np.int64)
        alive = np.arange(block)
        while alive.size:
            inc = sample_increments(params, (alive.size, chunk_cols), rng)
            v = v_prev[alive, None] + np.cumsum(inc, axis=1)
            prev = np.empty_like(v)
            prev[:, 0] = v_prev[alive]
            prev[:, 1:] = v[:, :-1]
            running = (
                weight[alive, None]
                + np.arange(1, chunk_cols + 1)
                + np.cumsum(np.abs(v), axis=1)
            )
            done = ((prev != 0) & (prev * v <= 0)) | (running >= weight_cap)
            has = done.any(axis=1)
            first = np.argmax(done, axis=1)
            hit = np.nonzero(has)[0]
            out[done_total + alive[hit]] = running[hit, first[hit]]
            v_prev[alive] = v[:, -1]
            weight[alive] = running[:, -1]
            alive = alive[~has]
        done_total += block
    return out


def renewal_mass_table(
    params: ModelParams,
    rng: np.random.Generator,
    n_values=None,
    n_replicas: int = 20_000,
    row_batch: int = 4096,
    chunk_cols: int = 128,
):
    """Monte Carlo renewal mass: fraction of fresh walks whose cumulative
    excursion weights hit each n exactly.

    Returns (n_values, frequencies, standard_errors).  Each replica is an
    independent walk simulated until its clock passes max(n_values).
    """
    if n_values is None:
        n_values = np.unique(np.geomspace(100, 10_000, 16).astype(np.int64))
    n_values = np.asarray(n_values, dtype=np.int64)
    if n_values.min() < 1:
        raise DomainError("renewal indices must be >= 1")
    horizon = int(n_values.max())
    hits_total = np.zeros(len(n_values), dtype=np.int64)
    done_replicas = 0
    while done_replicas < n_replicas:
        rows = min(row_batch, n_replicas - done_replicas)
        v_prev = np.zeros(rows, dtype=np.int64)
        k_prev = np.zeros(rows, dtype=np.int64)
        hits = np.zeros((rows, len(n_values)), dtype=bool)
        alive = np.arange(rows)
        while alive.size:
            inc = sample_increments(params, (alive.size, chunk_cols), rng)
            v = v_prev[alive, None] + np.cumsum(inc, axis=1)
            prev = np.empty_like(v)
            prev[:, 0] = v_prev[alive]
            prev[:, 1:] = v[:, :-1]
            clock = (
                k_prev[alive, None]
                + np.arange(1, chunk_cols + 1)
                + np.cumsum(np.abs(v), axis=1)
            )
            arrival = (prev != 0) & (prev * v <= 0)
            for j, n in enumerate(n_values):
                hits[alive, j] |= (arrival & (clock == n)).any(axis=1)
            v_prev[alive] = v[:, -1]
            k_prev[alive] = clock[:, -1]
            alive = alive[clock[:, -1] < horizon]
        hits_total += hits.sum(axis=0)
        done_replicas += rows
    freq = hits_total / n_replicas
    se = np.sqrt(np.maximum(freq * (1 - freq), 0.0) / n_replicas)
    return n_values, freq, se


# ---------------------------------------------------------------------------
# Terminal zero-run table


@dataclass(frozen=True)
class YlTable:
    """Empirical survival P(y > k) for k = 0..k_max with Monte Carlo errors."""

    k: np.ndarray
    survival: np.ndarray
    stderr: np.ndarray
    n_replicas: int

    def uniform_cutoff(self, level: float = 0.05) -> int:
        """Smallest k with P(y > k) < level."""
        below = np.nonzero(self.survival < level)[0]
        if below.size == 0:
            raise DomainError(f"no k with survival below {level} in this table")
        return int(self.k[below[0]])


def yl_statistic(replicas, k_max: int | None = None, min_replicas: int = 10_000) -> YlTable:
    """Survival table of the terminal zero run over sampled walks.

    replicas is an array of already-computed run lengths, or a sequence of
    accepted samples / walks from which the run is measured.
    """
    if len(replicas) and not np.isscalar(replicas[0]):
        y = np.fromiter(
            (
                trailing_zero_run(r.walk if hasattr(r, "walk") else r)
                for r in replicas
            ),
            dtype=np.int64,
            count=len(replicas),
        )
    else:
        y = np.asarray(replicas, dtype=np.int64)
    if len(y) < min_replicas:
        raise DomainError(f"need at least {min_replicas} replicas, got {len(y)}")
    if np.any(y < 0):
        raise ValidationError("zero-run lengths are nonnegative by definition")
    if k_max is None:
        k_max = int(y.max())
    k = np.arange(k_max + 1)
    y_sorted = np.sort(y)
    survival = 1.0 - np.searchsorted(y_sorted, k, side="right") / len(y)
    se = np.sqrt(np.maximum(survival * (1 - survival), 0.0) / len(y))
    return YlTable(k, survival, se, len(y))


# ---------------------------------------------------------------------------
# Shape-convergence experiment


@dataclass(frozen=True)
class ShapeConfig:
    lengths: tuple = (2000, 8000, 32000)
    replicas: int = 320
    seed_groups: int = 5
    master_seed: int = 0
    dt: float = 1e-4
    epsilon: float = 0.02
    harvest_n: int = 10_000
    harvest_seed: int = 0
    hausdorff_replicas: int | None = 3
    hausdorff_pitch_divisor: float = 8.0
    cache_dir: str | None = None
    attempt_budget: int | None = None

    def __post_init__(self):
        if self.replicas < 2 or self.seed_groups < 1:
            raise DomainError("need replicas >= 2 and seed_groups >= 1")
        if any(length < 10 for length in self.lengths):
            raise DomainError("lengths below 10 have no meaningful rescaling")
        if not self.hausdorff_pitch_divisor > 0:
            raise DomainError("pitch divisor must be positive")


_SHAPE_SAMPLE_LANE = 2  # lanes 0 and 1 belong to the harvest engine
_SHAPE_DRIFT_LANE = 3

_ROW_FIELDS = (
    "L",
    "group",
    "replicas",
    "ks_extension",
    "ks_height",
    "ks_com",
    "ks_noise_floor",
    "extension_median",
    "area_ratio",
    "hausdorff_mean",
    "hausdorff_se",
    "hausdorff_max",
    "hausdorff_n",
    "attempts",
)


@dataclass(frozen=True)
class ShapeResult:
    rows: tuple
    manifest: dict

    def to_csv(self, fileobj):
        fileobj.write(",".join(_ROW_FIELDS) + "\n")
        for row in self.rows:
            fileobj.write(",".join(f"{row[f]:.10g}" for f in _ROW_FIELDS) + "\n")

    def median_over_groups(self, field: str) -> dict:
        out = {}
        for L in sorted({row["L"] for row in self.rows}):
            vals = [row[field] for row in self.rows if row["L"] == L]
            out[L] = float(np.median(vals))
        return out


def shape_experiment(params: ModelParams, config: ShapeConfig, progress=None) -> ShapeResult:
    """Convergence table of rescaled polymer functionals against the continuum.

    For every (length, seed group): KS distances of extension / L^(2/3),
    max stretch height / L^(1/3) and terminal center of mass / L^(1/3)
    against the conditioned continuum reference (a1, max|B|, D at a1), the
    rescaled occupied-set area ratio, and Hausdorff distances between each
    path's aligned stretch band and its rescaled occupied set on the first
    hausdorff_replicas paths (every path when that field is None).

    The continuum reference is harvested once at variance rate 1 and mapped
    to this model's variance rate exactly; the D leg is synthesized as
    N(0, sigma2 * a1) per reference replica, which is its exact conditional
    law given a1 (D is independent of B).
    """
    hv = harvest_conditioned(
        n_accepted=config.harvest_n,
        dt=config.dt,
        epsilon=config.epsilon,
        seed=config.harvest_seed,
        cache_dir=config.cache_dir,
        progress=progress,
    )
    view = hv.scaled_view(params.sigma2)
    a1_ref = view["a1"]
    height_ref = view["max_abs"]
    drift_rng = stream(config.master_seed, _SHAPE_DRIFT_LANE * LANE_STRIDE)
    com_ref = np.sqrt(params.sigma2 * a1_ref) * drift_rng.standard_normal(len(a1_ref))
    noise_floor = 1.36 * np.sqrt(1 / config.replicas + 1 / len(a1_ref))

    rows = []
    for gi in range(config.seed_groups):
        for li, L in enumerate(config.lengths):
            idx = gi * len(config.lengths) + li
            g = stream(config.master_seed, _SHAPE_SAMPLE_LANE * LANE_STRIDE + idx)
            samples = sample_critical_walk_many(
                L, params, g, config.replicas, config.attempt_budget
            )
            ext = np.empty(config.replicas)
            hgt = np.empty(config.replicas)
            com = np.empty(config.replicas)
            for i, s in enumerate(samples):
                vals = s.walk.values
                n_str = len(vals) - 2
                ext[i] = n_str / L ** (2 / 3)
                hgt[i] = np.abs(vals).max() / L ** (1 / 3)
                com[i] = center_of_mass(s.walk)[n_str] / L ** (1 / 3)
            dists = []
            areas = []
            n_h = config.replicas if config.hausdorff_replicas is None else config.hausdorff_replicas
            # matches the default pitch of these regions; a smaller divisor
            # trades certified resolution for speed on all-path sweeps
            pitch = min(1.0, float(L) ** (-1.0 / 3.0)) / config.hausdorff_pitch_divisor
            for s in samples[:n_h]:
                vals = s.walk.values
                cfg = walk_to_stretches(vals, len(vals) - 2)
                band = geometry.align_band_to_squares(geometry.polymer_band(cfg, L), L)
                occ = geometry.rescale(
                    geometry.occupied_set(stretches_to_lattice(cfg)),
                    L ** (2 / 3),
                    L ** (1 / 3),
                )
                dists.append(geometry.hausdorff(band, occ, resolution=pitch).value)
                areas.append(occ.area)
            dists = np.asarray(dists)
            if len(set(np.round(areas, 15))) > 1:
                raise ValidationError("occupied-set area ratio varied across paths")
            row = {
                "L": L,
                "group": gi,
                "replicas": config.replicas,
                "ks_extension": distribution_distance(ext, a1_ref)[0],
                "ks_height": distribution_distance(hgt, height_ref)[0],
                "ks_com": distribution_distance(com, com_ref)[0],
                "ks_noise_floor": noise_floor,
                "extension_median": float(np.median(ext)),
                "area_ratio": float(areas[0]),
                "hausdorff_mean": float(dists.mean()),
                "hausdorff_se": float(dists.std(ddof=1) / np.sqrt(len(dists)))
                if len(dists) > 1
                else 0.0,
                "hausdorff_max": float(dists.max()),
                "hausdorff_n": len(dists),
                "attempts": samples[-1].attempts,
            }
            rows.append(row)
            if progress is not None:
                progress(("shape", L, gi), None, len(rows))
    manifest = {
        "config": asdict(config),
        "beta": params.beta,
        "sigma2": params.sigma2,
        "toolkit_version": __version__,
        "reference": {
            "n": hv.n_accepted,
            "attempts": hv.attempts,
            "epsilon_scaled": view["epsilon"],
            "leak": hv.leak_report(),
        },
        "seed_layout": {
            "sample_lane": _SHAPE_SAMPLE_LANE,
            "drift_lane": _SHAPE_DRIFT_LANE,
            "stream_index": "lane * 2^48 + group * len(lengths) + length_index",
        },
    }
    return ShapeResult(tuple(rows), manifest)
