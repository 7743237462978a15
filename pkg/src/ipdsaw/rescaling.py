"""Cadlag rescalings of the walk and its center of mass.

Two scalings of a conditioned walk: the "hat" pair runs on walk time
(space / L^(1/3), time / L^(2/3), stopped at the clock passage) and lives
on [0, infinity); the "tilde" pair runs on polymer length through the
clock's first-passage inverse and lives on [0, 1].  The "polymer" pair is
the hat-type scaling built from the stretch representation.  Truncation
suppresses excursions below a weight threshold, the contract being an
exact integer comparison k * X_r >= L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RangeError, ValidationError
from .model import walk_to_stretches
from .walk import WalkPath, area_clock, center_of_mass, decompose_excursions

__all__ = [
    "StepFunction",
    "ScaledProcessPair",
    "rescale_processes",
    "truncate_discrete",
    "interpolate",
    "sup_distance",
    "METRIC_TERMS",
]

VARIANTS = ("hat", "tilde", "polymer", "truncated")
METRIC_TERMS = 40  # series tail below 2^-40 < 1e-12


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step values on a uniform grid.

    values[m] is the value on [m*grid_step, (m+1)*grid_step); evaluation at
    an exact grid point returns values[m].  domain "unit" ends at the last
    grid point; "half_line" continues at the final value.
    """

    grid_step: float
    values: np.ndarray
    domain: str = "unit"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or len(vals) < 1:
            raise ValidationError("need a nonempty 1-d value array")
        if not (self.grid_step > 0):
            raise ValidationError("grid_step must be positive")
        if self.domain not in ("unit", "half_line"):
            raise ValidationError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "values", vals)

    @property
    def rate(self) -> float:
        return 1.0 / self.grid_step

    @property
    def grid(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.grid_step

    def __call__(self, s):
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < -1e-12):
            raise RangeError("negative query point")
        if self.domain == "unit" and np.any(s_arr * self.grid_step ** -1 > len(self.values) - 1 + 1e-9):
            raise RangeError("query beyond the unit domain")
        # nudge absorbs float noise when s is an exact grid multiple
        idx = np.floor(s_arr / self.grid_step + 1e-9).astype(np.int64)
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = self.values[idx]
        return out if out.ndim else float(out)

    def to_csv(self, fileobj):
        for s, v in zip(self.grid, self.values):
            fileobj.write(f"{s:.12g},{v:.12g}\n")


@dataclass(frozen=True, eq=False)
class ScaledProcessPair:
    profile: StepFunction
    com: StepFunction
    variant: str

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}")
        if self.profile.grid_step != self.com.grid_step:
            raise ValidationError("profile and center of mass must share the grid")
        if self.profile.domain != self.com.domain:
            raise ValidationError("profile and center of mass must share the domain")


def _clock_to_length(walk: WalkPath, L: int):
    K, xi = area_clock(walk)
    if K[-1] < L:
        raise RangeError(f"walk clock reaches {K[-1]}, below the target length {L}")
    return K, xi


def rescale_processes(walk: WalkPath, L: int, variant: str = "tilde") -> ScaledProcessPair:
    """Scaled (profile, center-of-mass) pair for the given variant.

    hat: s -> V at index floor(s L^(2/3)) stopped at the passage time, over
    L^(1/3); tilde: s -> V at the first-passage index of level s L; polymer:
    hat-type scaling of (|stretch|, stretch center of mass) capped at the
    stretch count, built through the stretch representation.
    """
    if L < 1:
        raise DomainError("length must be >= 1")
    K, xi = _clock_to_length(walk, L)
    space = float(L) ** (-1.0 / 3.0)
    stop = int(xi(L))
    if variant == "hat":
        v = space * walk.values[: stop + 1]
        m = space * center_of_mass(walk)[: stop + 1]
        step = float(L) ** (-2.0 / 3.0)
        return ScaledProcessPair(
            StepFunction(step, v, "half_line"), StepFunction(step, m, "half_line"), "hat"
        )
    if variant == "tilde":
        idx = xi(np.arange(L + 1))
        v = space * walk.values[idx]
        m = space * center_of_mass(walk)[idx]
        return ScaledProcessPair(
            StepFunction(1.0 / L, v, "unit"), StepFunction(1.0 / L, m, "unit"), "tilde"
        )
    if variant == "polymer":
        cfg = walk_to_stretches(walk.values, stop)
        l = np.asarray(cfg.stretches, dtype=float)
        prof = space * np.concatenate(([0.0], np.abs(l)))
        half_sum = np.concatenate(([0.0], np.cumsum(l) - 0.5 * l))
        step = float(L) ** (-2.0 / 3.0)
        return ScaledProcessPair(
            StepFunction(step, prof, "half_line"),
            StepFunction(step, space * half_sum, "half_line"),
            "polymer",
        )
    raise ValidationError(f"rescale_processes does not build variant {variant!r}")


def truncate_discrete(walk: WalkPath, L: int, k: int) -> ScaledProcessPair:
    """Tilde pair with excursions of weight below L/k suppressed.

    The profile is zeroed on small excursions; the center of mass freezes
    outside large ones, accumulating whole-excursion increments of the large
    excursions plus the running partial increment inside the current
    excursion once its weight so far clears the threshold.  All threshold
    tests are the exact integer comparison k * X >= L.
    """
    if k < 1:
        raise DomainError("truncation index k must be >= 1")
    K, xi = _clock_to_length(walk, L)
    v = walk.values
    M = center_of_mass(walk)
    dec = decompose_excursions(walk)
    taus = dec.taus
    n = len(v)

    # per-index excursion id; indices past the last stopping time are the
    # open excursion (id = n_excursions) with a running weight
    ids = np.searchsorted(taus, np.arange(n), side="left")
    cum_abs = np.cumsum(np.abs(v))
    last = taus[-1]
    keep_completed = k * dec.weights >= L
    running = (np.arange(n) - last) + (cum_abs - cum_abs[last])
    keep_open = k * running >= L

    keep_idx = np.zeros(n, dtype=bool)
    completed_zone = np.arange(n) <= last
    exc_of = np.clip(ids - 1, 0, max(len(dec.weights) - 1, 0))
    if len(dec.weights):
        keep_idx[completed_zone] = keep_completed[exc_of[completed_zone]]
    keep_idx[~completed_zone] = keep_open[~completed_zone]
    keep_idx[0] = False

    v_trunc = np.where(keep_idx, v, 0).astype(float)

    m_exc = M[taus[1:]] - M[taus[:-1]]
    base = np.concatenate(([0.0], np.cumsum(np.where(keep_completed, m_exc, 0.0))))
    m_trunc = np.empty(n)
    zone = completed_zone & (np.arange(n) > 0)
    m_trunc[0] = 0.0
    if len(dec.weights):
        r = exc_of[zone]
        m_trunc[zone] = base[r] + np.where(keep_completed[r], M[zone] - M[taus[r]], 0.0)
    open_zone = ~completed_zone
    m_trunc[open_zone] = base[-1] + np.where(keep_open[open_zone], M[open_zone] - M[last], 0.0)

    idx = xi(np.arange(L + 1))
    space = float(L) ** (-1.0 / 3.0)
    return ScaledProcessPair(
        StepFunction(1.0 / L, space * v_trunc[idx], "unit"),
        StepFunction(1.0 / L, space * m_trunc[idx], "unit"),
        "truncated",
    )


def interpolate(f: StepFunction):
    """Piecewise-linear function through the grid values of f."""
    grid = f.grid
    values = f.values

    def lin(s):
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < -1e-12):
            raise RangeError("negative query point")
        if f.domain == "unit" and np.any(s_arr > grid[-1] + 1e-9):
            raise RangeError("query beyond the unit domain")
        out = np.interp(s_arr, grid, values)
        return out if out.ndim else float(out)

    lin.grid_step = f.grid_step
    lin.domain = f.domain
    return lin


def _common_layout(f: StepFunction, g: StepFunction):
    if f.domain != g.domain:
        raise DomainError("step functions live on different domains")
    if not np.isclose(f.grid_step, g.grid_step, rtol=1e-12, atol=0.0):
        raise DomainError("step functions use different grids")


def sup_distance(f: StepFunction, g: StepFunction) -> float:
    """Uniform distance on [0,1]; weighted-series metric on the half line.

    The half-line metric sums 2^-j (1 and sup_{[0,j]} |f-g|, whichever is
    smaller) over j = 1..METRIC_TERMS; the dropped tail is below 2^-40.
    Both inputs continue at their final value, so the stopped processes
    compare correctly past their passage times.
    """
    _common_layout(f, g)
    a, b = f.values, g.values
    if len(a) < len(b):
        a = np.concatenate([a, np.full(len(b) - len(a), a[-1])])
    elif len(b) < len(a):
        b = np.concatenate([b, np.full(len(a) - len(b), b[-1])])
    gaps = np.abs(a - b)
    if f.domain == "unit":
        return float(gaps.max())
    total = 0.0
    for j in range(1, METRIC_TERMS + 1):
        hi = min(len(gaps), int(np.floor(j * f.rate + 1e-9)) + 1)
        total += 2.0 ** (-j) * min(1.0, float(gaps[:hi].max()))
    return total
