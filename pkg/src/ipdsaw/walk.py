"""Auxiliary random walk: increment laws, area clock, excursion decomposition.

The walk V has i.i.d. two-sided geometric increments; its alternating-sign
image is a stretch configuration.  The area clock K_n = n + sum_{i<=n} |V_i|
converts walk time to polymer length, and the excursion decomposition turns
the walk into a renewal process whose arrival set governs the conditioning
used by the exact samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RangeError, ValidationError
from .model import ModelParams

__all__ = [
    "WalkPath",
    "ExcursionDecomposition",
    "increment_pmf",
    "sample_step",
    "sample_increments",
    "area_clock",
    "center_of_mass",
    "decompose_excursions",
    "excursion_blocks",
    "reconstruct_unconditioned",
    "reconstruct_conditioned",
]

START_LAWS = ("zero", "mu_beta")


@dataclass(frozen=True, eq=False)
class WalkPath:
    """Integer walk values (V_0, ..., V_n) plus the tag of the start law."""

    values: np.ndarray
    start_law: str = "zero"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64)
        if vals.ndim != 1 or vals.size < 1:
            raise ValidationError("walk values must be a nonempty 1-d sequence")
        if self.start_law not in START_LAWS:
            raise ValidationError(f"start_law must be one of {START_LAWS}")
        if self.start_law == "zero" and vals[0] != 0:
            raise ValidationError("zero-start walk must have V_0 = 0")
        object.__setattr__(self, "values", vals)

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    def to_json(self) -> list:
        return [int(v) for v in self.values]


@dataclass(frozen=True, eq=False)
class ExcursionDecomposition:
    """Renewal bookkeeping of a walk.

    taus starts at tau_0 = 0; lengths, areas, weights and partial_sums are
    per completed excursion; renewal_set is (0, S_1, S_2, ...).  A trailing
    incomplete excursion is reported via open_length/open_area, never merged
    into the records.  nu is the number of completed excursions within the
    budget when one is supplied.
    """

    taus: np.ndarray
    lengths: np.ndarray
    areas: np.ndarray
    weights: np.ndarray
    partial_sums: np.ndarray
    renewal_set: np.ndarray
    open_length: int
    open_area: int
    nu: int | None = None
    budget: int | None = None

    @property
    def n_excursions(self) -> int:
        return len(self.lengths)

    def contains(self, s: int) -> bool:
        """Membership test for the renewal set."""
        i = np.searchsorted(self.renewal_set, s)
        return bool(i < len(self.renewal_set) and self.renewal_set[i] == s)

    def to_json(self) -> dict:
        out = {
            "taus": self.taus.tolist(),
            "lengths": self.lengths.tolist(),
            "areas": self.areas.tolist(),
            "weights": self.weights.tolist(),
            "partial_sums": self.partial_sums.tolist(),
            "renewal_set": self.renewal_set.tolist(),
            "open_length": self.open_length,
            "open_area": self.open_area,
        }
        if self.budget is not None:
            out["nu"] = self.nu
            out["budget"] = self.budget
        return out


def increment_pmf(params: ModelParams, k, law: str = "laplace"):
    """Probability of increment value k (vectorized) under either law.

    laplace: x^|k| / c_beta, the stationary increment law.
    mu: (1-x) at 0 and (1-x)/2 * x^|k| elsewhere, the start law making the
    first excursion exchangeable with the later ones.
    """
    x = params.magnitude_ratio
    k = np.asarray(k)
    mag = x ** np.abs(k)
    if law == "laplace":
        out = mag / params.c_beta
    elif law == "mu":
        out = np.where(k == 0, 1.0 - x, 0.5 * (1.0 - x) * mag)
    else:
        raise ValidationError(f"unknown increment law {law!r}")
    return out if out.ndim else float(out)


def sample_step(params: ModelParams, rng: np.random.Generator, law: str = "laplace") -> int:
    return int(sample_increments(params, 1, rng, law=law)[0])


def sample_increments(
    params: ModelParams, size, rng: np.random.Generator, law: str = "laplace"
) -> np.ndarray:
    """Vectorized draws from a single uniform per element.

    The unit interval is split into the zero atom, then sign, then the
    geometric(1-x) magnitude on {1, 2, ...} by inverse transform (the same
    ceil-log construction numpy's geometric uses, fused here because this
    sampler dominates the simulation cost).
    """
    x = params.magnitude_ratio
    if law == "laplace":
        zero_mass = 1.0 / params.c_beta
    elif law == "mu":
        zero_mass = 1.0 - x
    else:
        raise ValidationError(f"unknown increment law {law!r}")
    u = rng.random(size)
    v = (u - zero_mass) / (1.0 - zero_mass)
    positive = v < 0.5
    w = np.where(positive, 2.0 * v, 2.0 * v - 1.0)  # uniform again, w < 1
    # for the zero rows w is negative; the log stays finite and is masked off
    mag = (np.log1p(-w) / math.log(x)).astype(np.int64) + 1
    return np.where(u < zero_mass, 0, np.where(positive, mag, -mag))


def area_clock(walk: WalkPath):
    """The running length-plus-magnitude clock and its first-passage inverse.

    K_0 = 0 and K_n = n + sum_{i=1}^{n} |V_i|; the start value is never
    charged, so a mu_beta start uses the same formula.  The inverse maps a
    level s to the first index with K >= s.
    """
    v = walk.values
    K = np.arange(len(v)) + np.concatenate(([0], np.cumsum(np.abs(v[1:]))))

    def xi(s):
        s_arr = np.asarray(s)
        if np.any(s_arr > K[-1]):
            raise RangeError(f"clock reaches {K[-1]}, queried at {s_arr.max()}")
        idx = np.searchsorted(K, s_arr, side="left")
        return idx if idx.ndim else int(idx)

    return K, xi


def center_of_mass(walk: WalkPath) -> np.ndarray:
    """Alternating half-sum of increments: M_i = sum_j (-1)^(j+1) U_j / 2.

    This is the vertical center of mass of the polymer built from the first
    i stretches: with V_0 = 0 it equals l_1 + ... + l_{i-1} + l_i / 2 under
    the alternating-sign correspondence.
    """
    u = np.diff(walk.values)
    alt = np.ones(len(u))
    alt[1::2] = -1.0
    return np.concatenate(([0.0], 0.5 * np.cumsum(alt * u)))


def _stopping_times(v: np.ndarray) -> np.ndarray:
    prev, cur = v[:-1], v[1:]
    hit = (prev != 0) & (prev * cur <= 0)
    return np.flatnonzero(hit) + 1


def decompose_excursions(walk: WalkPath, budget: int | None = None) -> ExcursionDecomposition:
    """Split at sign changes and zero hits; account length, area, weight.

    An excursion runs over (tau_{k-1}, tau_k] where tau_{k+1} is the first
    i > tau_k with V_{i-1} != 0 and V_{i-1} V_i <= 0; its area charges the
    magnitudes strictly after the left boundary, which makes the partial
    weight sums S_n coincide with the clock K at tau_n exactly.
    """
    v = walk.values
    taus = _stopping_times(v)
    cum = np.cumsum(np.abs(v))
    left = np.concatenate(([0], taus[:-1])) if len(taus) else np.zeros(0, dtype=np.int64)
    lengths = taus - left
    areas = cum[taus] - cum[left] if len(taus) else np.zeros(0, dtype=np.int64)
    weights = lengths + areas
    partial = np.cumsum(weights)
    renewal = np.concatenate(([0], partial))
    last = taus[-1] if len(taus) else 0
    open_length = len(v) - 1 - last
    open_area = int(cum[-1] - cum[last])
    nu = None
    if budget is not None:
        if budget < 0:
            raise RangeError("budget must be nonnegative")
        nu = int(np.searchsorted(partial, budget, side="right"))
    return ExcursionDecomposition(
        taus=np.concatenate(([0], taus)),
        lengths=lengths,
        areas=areas,
        weights=weights,
        partial_sums=partial,
        renewal_set=renewal,
        open_length=int(open_length),
        open_area=open_area,
        nu=nu,
        budget=budget,
    )


def excursion_blocks(walk: WalkPath) -> list:
    """Modulus blocks |V| over [tau_{k-1}, tau_k], boundaries shared."""
    v = np.abs(walk.values)
    taus = _stopping_times(walk.values)
    return [v[a : b + 1].copy() for a, b in zip(np.concatenate(([0], taus[:-1])), taus)]


def _validate_block(m: np.ndarray) -> int:
    """Check a modulus block is a single excursion; return its first nonzero index."""
    if len(m) < 2:
        raise ValidationError("an excursion block needs at least two values")
    if np.any(m < 0):
        raise ValidationError("modulus blocks must be nonnegative")
    nz = np.flatnonzero(m)
    if len(nz) == 0:
        raise ValidationError("an all-zero block is not an excursion")
    j0 = nz[0]
    if np.any(m[j0:-1] == 0):
        raise ValidationError("zeros may only lead a block or close it")
    return int(j0)


class _SignSource:
    """Bernoulli signs from an explicit list, falling back to an rng."""

    def __init__(self, signs, rng):
        self.signs = list(signs) if signs is not None else None
        self.pos = 0
        self.rng = rng

    def take(self) -> int:
        if self.signs is not None:
            if self.pos >= len(self.signs):
                raise ValidationError("ran out of Bernoulli signs")
            s = int(self.signs[self.pos])
            self.pos += 1
            if s not in (-1, 1):
                raise ValidationError("signs must be +1 or -1")
            return s
        if self.rng is None:
            raise ValidationError("need signs or an rng for the sign choices")
        return int(self.rng.integers(0, 2)) * 2 - 1


def _assemble(blocks, source: _SignSource, start_law: str) -> WalkPath:
    """Concatenate modulus blocks, choosing each block's side.

    A block whose first value is nonzero continues across a sign change, so
    it sits opposite the previous block's last interior value; a block that
    starts from 0 picks a fresh symmetric sign.  The final boundary of each
    block belongs to the next block's side (or closes the walk).
    """
    if not blocks:
        raise ValidationError("need at least one excursion block")
    out = []
    s = 0
    prev_end = None
    for k, raw in enumerate(blocks):
        m = np.asarray(raw, dtype=np.int64)
        _validate_block(m)
        if k == 0:
            s = source.take()
        else:
            if m[0] != prev_end:
                raise ValidationError(
                    f"block {k} starts at modulus {m[0]}, previous ended at {prev_end}"
                )
            s = source.take() if m[0] == 0 else -s
        out.extend((s * m[:-1]).tolist())
        prev_end = int(m[-1])
    out.append(-s * prev_end)
    return WalkPath(np.asarray(out, dtype=np.int64), start_law=start_law)


def reconstruct_unconditioned(blocks, signs=None, rng=None, start_law="mu_beta") -> WalkPath:
    """Rebuild a walk from modulus excursion blocks and symmetric signs."""
    return _assemble(blocks, _SignSource(signs, rng), start_law)


def reconstruct_conditioned(
    renewal_set, blocks, signs=None, rng=None, start_law="mu_beta"
) -> WalkPath:
    """Rebuild a walk whose renewal set is prescribed.

    Block j must carry weight (length + area) equal to the j-th gap of the
    renewal set; the assembled walk then reproduces the set exactly.
    """
    renewal = np.asarray(renewal_set, dtype=np.int64)
    if len(renewal) < 2 or renewal[0] != 0 or np.any(np.diff(renewal) < 1):
        raise ValidationError("renewal set must start at 0 and strictly increase")
    gaps = np.diff(renewal)
    if len(blocks) != len(gaps):
        raise ValidationError(f"{len(gaps)} renewal gaps but {len(blocks)} blocks")
    for j, (raw, gap) in enumerate(zip(blocks, gaps)):
        m = np.asarray(raw, dtype=np.int64)
        weight = (len(m) - 1) + int(m[1:].sum())
        if weight != gap:
            raise ValidationError(f"block {j} has weight {weight}, gap needs {gap}")
    return _assemble(blocks, _SignSource(signs, rng), start_law)
