"""Polymer model: configurations, Hamiltonian, exact laws, critical point.

A configuration of total length L is a sequence of signed vertical stretches
(l_1, ..., l_N) with sum |l_n| + N = L; equivalently a partially directed
self-avoiding lattice path of L unit steps ending with a horizontal step.
The energy couples consecutive opposite-sign stretches through the overlap
min(|l_n|, |l_{n+1}|), and the polymer law at inverse temperature beta
weights configurations by exp(beta * H).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SizeError, ValidationError

__all__ = [
    "ModelParams",
    "StretchConfig",
    "LatticePath",
    "make_params",
    "critical_beta",
    "hamiltonian_stretch",
    "hamiltonian_lattice",
    "convert",
    "stretches_to_lattice",
    "lattice_to_stretches",
    "walk_to_stretches",
    "count_configs",
    "enumerate_configs",
    "exact_polymer_law",
    "partition_dp",
]

ENUMERATION_CAP = 10_000_000  # configurations; keeps the oracle suite fast


@dataclass(frozen=True)
class ModelParams:
    """Coupling beta and the derived constants of the increment law.

    magnitude_ratio is exp(-beta/2), the geometric ratio of the increment
    law; c_beta its normalizer; sigma2 its variance; gamma_beta the
    exponential weight c_beta * exp(-beta) whose unit root is the critical
    point.
    """

    beta: float
    c_beta: float
    sigma2: float
    gamma_beta: float

    @property
    def magnitude_ratio(self) -> float:
        return math.exp(-self.beta / 2.0)


def make_params(beta: float) -> ModelParams:
    if beta <= 0:
        raise DomainError(f"beta must be positive, got {beta}")
    x = math.exp(-beta / 2.0)
    c = (1.0 + x) / (1.0 - x)
    sigma2 = 2.0 * x * (1.0 + x) / (c * (1.0 - x) ** 3)
    return ModelParams(beta=beta, c_beta=c, sigma2=sigma2, gamma_beta=c * math.exp(-beta))


def critical_beta(tolerance: float = 1e-12) -> float:
    """The beta at which gamma_beta = 1, by bisection.

    gamma is strictly decreasing in beta, with the root bracketed in (0, 4);
    equivalently exp(-beta/2) is the real root of x^3 + x^2 + x = 1.
    """
    if tolerance <= 0:
        raise DomainError("tolerance must be positive")
    lo, hi = 0.5, 4.0
    while True:
        mid = 0.5 * (lo + hi)
        gap = make_params(mid).gamma_beta - 1.0
        if abs(gap) <= tolerance or hi - lo < 1e-16:
            return mid
        if gap > 0:
            lo = mid
        else:
            hi = mid


@dataclass(frozen=True)
class StretchConfig:
    """Signed stretch sequence (l_1, ..., l_N) of total length N + sum |l_n|."""

    stretches: tuple
    total_length: int = field(default=None)

    def __post_init__(self):
        stretches = tuple(int(v) for v in self.stretches)
        if len(stretches) < 1:
            raise ValidationError("a configuration needs at least one stretch")
        length = len(stretches) + sum(abs(v) for v in stretches)
        object.__setattr__(self, "stretches", stretches)
        if self.total_length is None:
            object.__setattr__(self, "total_length", length)
        elif self.total_length != length:
            raise ValidationError(
                f"declared length {self.total_length} != N + sum|l| = {length}"
            )

    @property
    def n_stretches(self) -> int:
        return len(self.stretches)

    def to_json(self) -> dict:
        return {"stretches": list(self.stretches), "L": self.total_length}

    @classmethod
    def from_json(cls, obj: dict) -> "StretchConfig":
        return cls(tuple(obj["stretches"]), obj.get("L"))


@dataclass(frozen=True)
class LatticePath:
    """Up/down/right step path with distinct sites, ending with a right step."""

    steps: str
    sites: tuple = field(default=None)

    def __post_init__(self):
        if set(self.steps) - set("UDR"):
            raise ValidationError(f"steps must be over 'UDR', got {self.steps!r}")
        if not self.steps.endswith("R"):
            raise ValidationError("the final step must be horizontal")
        sites = [(0, 0)]
        moves = {"U": (0, 1), "D": (0, -1), "R": (1, 0)}
        for s in self.steps:
            dx, dy = moves[s]
            x, y = sites[-1]
            sites.append((x + dx, y + dy))
        sites = tuple(sites)
        if len(set(sites)) != len(sites):
            raise ValidationError("path revisits a site")
        if self.sites is not None and tuple(self.sites) != sites:
            raise ValidationError("declared sites do not match the steps")
        object.__setattr__(self, "sites", sites)

    @property
    def length(self) -> int:
        return len(self.steps)


def hamiltonian_stretch(config: StretchConfig) -> int:
    """Sum of opposite-sign overlaps min(|l_n|, |l_{n+1}|) over neighbors."""
    l = config.stretches
    total = 0
    for a, b in zip(l, l[1:]):
        if a * b < 0:
            total += min(abs(a), abs(b))
    return total


def hamiltonian_lattice(path: LatticePath) -> int:
    """Count of self-touchings: non-consecutive site pairs at distance 1."""
    index = {site: i for i, site in enumerate(path.sites)}
    touches = 0
    for (x, y), i in index.items():
        for nb in ((x + 1, y), (x, y + 1)):
            j = index.get(nb)
            if j is not None and abs(i - j) > 1:
                touches += 1
    return touches


def stretches_to_lattice(config: StretchConfig) -> LatticePath:
    parts = []
    for v in config.stretches:
        parts.append(("U" if v > 0 else "D") * abs(v))
        parts.append("R")
    return LatticePath("".join(parts))


def lattice_to_stretches(path: LatticePath) -> StretchConfig:
    stretches = []
    run = 0
    for s in path.steps:
        if s == "R":
            stretches.append(run)
            run = 0
        else:
            run += 1 if s == "U" else -1
    if run != 0:
        raise ValidationError("path has vertical steps after the last right step")
    return StretchConfig(tuple(stretches))


def walk_to_stretches(values, n_stretches: int) -> StretchConfig:
    """Alternating-sign map from walk values (V_0, V_1, ...): l_i = (-1)^(i-1) V_i."""
    vals = [int(v) for v in values]
    if len(vals) < n_stretches + 1:
        raise ValidationError(
            f"walk has {len(vals) - 1} steps, need at least {n_stretches}"
        )
    return StretchConfig(
        tuple((v if i % 2 == 0 else -v) for i, v in enumerate(vals[1 : n_stretches + 1]))
    )


def convert(obj, n_stretches: int | None = None):
    """Map between the equivalent representations.

    StretchConfig -> LatticePath, LatticePath -> StretchConfig, and
    (walk values, n_stretches) -> StretchConfig.  Round trips are identities.
    """
    if isinstance(obj, StretchConfig):
        return stretches_to_lattice(obj)
    if isinstance(obj, LatticePath):
        return lattice_to_stretches(obj)
    if n_stretches is None:
        raise ValidationError("converting a walk requires n_stretches")
    values = getattr(obj, "values", obj)
    return walk_to_stretches(values, n_stretches)


def count_configs(L: int) -> int:
    """|Omega_L| without enumeration: a_L = 2 a_(L-1) + a_(L-2)."""
    if L < 1:
        raise DomainError("total length must be >= 1")
    a_prev, a = 1, 1  # a_0 is a formal seed; a_1 = 1
    for _ in range(L - 1):
        a_prev, a = a, 2 * a + a_prev
    return a


def enumerate_configs(L: int, cap: int = ENUMERATION_CAP) -> list[StretchConfig]:
    """All configurations of total length L, lexicographically ordered."""
    total = count_configs(L)
    if total > cap:
        raise SizeError(f"|Omega_{L}| = {total} exceeds the cap {cap}")

    out = []

    def rec(rem: int, prefix: list):
        if rem == 0:
            out.append(StretchConfig(tuple(prefix)))
            return
        for v in range(-(rem - 1), rem):
            prefix.append(v)
            rec(rem - 1 - abs(v), prefix)
            prefix.pop()

    rec(L, [])
    return out


def exact_polymer_law(L: int, beta: float, cap: int = ENUMERATION_CAP):
    """Partition value and exact configuration probabilities by enumeration.

    beta = 0 is allowed here (uniform law); the walk-based routes reject it.
    """
    if beta < 0:
        raise DomainError(f"beta must be nonnegative, got {beta}")
    configs = enumerate_configs(L, cap=cap)
    weights = np.array([math.exp(beta * hamiltonian_stretch(c)) for c in configs])
    Z = float(weights.sum())
    return Z, {c: float(w / Z) for c, w in zip(configs, weights)}


def partition_dp(L: int, beta: float, budget: int = 200):
    """Partition value and extension law by exact dynamic programming.

    Propagates the joint law of (walk value, accumulated magnitude) for the
    increment walk started at 0, collects the probability of ending at 0
    after N+1 steps with accumulated magnitude L-N, and assembles

        Z = c_beta * e^(beta L) * sum_N gamma_beta^N * P(N, L-N).

    Values are clamped to |v| <= L, which is exact: a larger value already
    overcharges the magnitude budget on its own.  Returns (Z, law) with
    law[N] = P(extension = N) for N = 1..L (index 0 unused).
    """
    if beta <= 0:
        raise DomainError(f"beta must be positive, got {beta}")
    if L < 1:
        raise DomainError("total length must be >= 1")
    if L > budget:
        raise SizeError(f"L = {L} beyond the DP budget {budget}")
    params = make_params(beta)
    x = params.magnitude_ratio
    G = L  # max accumulated magnitude
    vmax = L
    vals = np.arange(-vmax, vmax + 1)
    step_pmf = x ** np.abs(vals[:, None] - vals[None, :]) / params.c_beta

    # f[g, v]: probability of value v with accumulated magnitude g
    f = np.zeros((G + 1, 2 * vmax + 1))
    f[0, vmax] = 1.0
    p_hit = np.zeros(L + 1)
    for N in range(1, L + 1):
        f = f @ step_pmf
        # charge |v| to the magnitude budget: shift row g -> g + |v| per column
        shifted = np.zeros_like(f)
        for col, v in enumerate(vals):
            a = abs(v)
            if a <= G:
                shifted[a:, col] = f[: G + 1 - a, col]
        f = shifted
        if L - N <= G:
            # close the walk at 0 on the next step
            p_hit[N] = float(f[L - N] @ step_pmf[:, vmax])
    weights = np.array(
        [params.gamma_beta ** N * p_hit[N] for N in range(L + 1)]
    )
    Z = params.c_beta * math.exp(beta * L) * weights.sum()
    law = np.zeros(L + 1)
    if weights.sum() > 0:
        law = weights / weights.sum()
    return float(Z), law
