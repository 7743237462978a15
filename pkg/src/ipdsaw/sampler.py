"""Exact polymer samplers by rejection on the auxiliary walk.

The critical polymer law is the pushforward of the walk conditioned on an
exact clock hit (K at its first passage equals the target length) with the
next value at zero.  Both that conditioning and the renewal conditioning
(L in the arrival set) share one batched rejection engine; enumeration
oracles for small lengths make the samplers testable against exact laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, DomainError, SizeError, ValidationError
from .model import (
    ENUMERATION_CAP,
    ModelParams,
    count_configs,
    walk_to_stretches,
)
from .walk import WalkPath, sample_increments

__all__ = [
    "AcceptedSample",
    "default_budget",
    "sample_critical_walk",
    "sample_critical_walk_many",
    "sample_critical_polymer",
    "sample_renewal_conditioned",
    "sample_renewal_conditioned_many",
    "sample_excursion_area",
    "sample_excursion_area_many",
    "conditioned_walk_law_exact",
    "trailing_zero_run",
]

CRITICALITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class AcceptedSample:
    """An accepted walk plus the attempt count that produced it."""

    walk: WalkPath
    attempts: int

    def to_json(self, seed_index: int | None = None, as_stretches: bool = False) -> dict:
        values = self.walk.values
        out = {
            "L": int(len(values) - 2 + np.abs(values).sum()),
            "attempts": self.attempts,
        }
        if seed_index is not None:
            out["seed_index"] = seed_index
        if as_stretches:
            cfg = walk_to_stretches(values, len(values) - 2)
            out["stretches"] = list(cfg.stretches)
        else:
            out["walk"] = self.walk.to_json()
        return out


def default_budget(L: int) -> int:
    """Attempts before giving up; acceptance decays like L^(-2/3)."""
    return 200 * math.ceil(L ** (2.0 / 3.0))


def _require_critical(params: ModelParams):
    if abs(params.gamma_beta - 1.0) > CRITICALITY_TOL:
        raise DomainError(
            "the conditioned-walk representation holds at the critical coupling "
            f"only; got gamma_beta = {params.gamma_beta:.6g}"
        )


def _batch_layout(L: int, budget: int, n_samples: int | None = None):
    # the first clock passage lands near 0.9 L^(2/3); a window of about half
    # that minimizes drawn-but-unused columns, and undecided rows carry over
    cols = max(12, min(int(0.45 * L ** (2.0 / 3.0)) + 4, L + 2))
    rows = max(16, min(4096, budget, int(2_000_000 / cols)))
    if n_samples is not None:
        # about 7.5 L^(2/3) attempts per accept, so size small requests down
        # instead of paying the bulk batch; undersized batches just loop
        need = int(10.0 * n_samples * L ** (2.0 / 3.0)) + 16
        rows = max(16, min(rows, need))
    return rows, cols


def _gather_path(history, row: int, last_col: int, eff: int, v0: int) -> np.ndarray:
    """Stitch one attempt's value path back together from the chunk history.

    Intermediate chunks contribute their first eff columns (the carry point);
    the final chunk runs through the accepting column, which may use the
    lookahead column beyond eff.
    """
    pieces = [np.array([v0], dtype=np.int64)]
    last = len(history) - 1
    for k, (ids, chunk) in enumerate(history):
        pos = int(np.searchsorted(ids, row))
        pieces.append(chunk[pos, : (last_col + 1 if k == last else eff)])
    return np.concatenate(pieces)


def _run_batch(L, params, g, n_rows, n_cols, mode, start_law, first_only=True):
    """One batch of attempts; returns accepted (row, path values) pairs.

    mode "terminal": accept at the first clock passage t with K_t = L and
    V_{t+1} = 0.  mode "renewal": accept when the passage lands exactly on a
    completed excursion, i.e. K_t = L with V_{t-1} != 0 and V_{t-1} V_t <= 0.
    Rows whose passage is not yet decidable inside the chunk resume from the
    last decidable column with fresh draws; the discarded tail column was
    never inspected, so the walk law is unchanged.  With first_only the scan
    stops at the first acceptance (a fixed rule, so runs are deterministic);
    otherwise every attempt in the batch is driven to a decision.
    """
    if start_law == "zero":
        v_carry = np.zeros(n_rows, dtype=np.int64)
    else:
        v_carry = sample_increments(params, n_rows, g, law="mu")
    v0_batch = v_carry.copy()
    k_carry = np.zeros(n_rows, dtype=np.int64)
    alive = np.arange(n_rows)
    history = []
    accepted = []
    eff = n_cols - 1 if mode == "terminal" else n_cols
    while len(alive):
        incs = sample_increments(params, (len(alive), n_cols), g)
        vp = v_carry[:, None] + np.cumsum(incs, axis=1)
        kp = k_carry[:, None] + np.cumsum(1 + np.abs(vp), axis=1)
        history.append((alive, vp))
        crossed = kp[:, :eff] >= L
        has = crossed.any(axis=1)
        t = np.argmax(crossed, axis=1)
        rows = np.flatnonzero(has)
        exact = kp[rows, t[rows]] == L
        if mode == "terminal":
            accept = exact & (vp[rows, t[rows] + 1] == 0)
            last_col = t[rows] + 1
        else:
            prev = np.where(t[rows] > 0, vp[rows, np.maximum(t[rows] - 1, 0)], v_carry[rows])
            cur = vp[rows, t[rows]]
            accept = exact & (prev != 0) & (prev * cur <= 0)
            last_col = t[rows]
        for r in np.flatnonzero(accept):
            row = int(alive[rows[r]])
            path = _gather_path(history, row, int(last_col[r]), eff, int(v0_batch[row]))
            accepted.append((row, path))
            if first_only:
                return accepted
        keep = ~has
        alive = alive[keep]
        v_carry = vp[keep, eff - 1]
        k_carry = kp[keep, eff - 1]
    accepted.sort(key=lambda item: item[0])
    return accepted


def _rejection_engine(L, params, rng, budget, mode, start_law):
    if L < 1:
        raise DomainError("length must be >= 1")
    if budget is None:
        budget = default_budget(L)
    if budget < 1:
        raise DomainError("attempt budget must be >= 1")
    n_rows, n_cols = _batch_layout(L, budget, n_samples=1)
    used = 0
    while used < budget:
        n = min(n_rows, budget - used)
        accepted = _run_batch(L, params, rng, n, n_cols, mode, start_law)
        if accepted:
            row, path = accepted[0]
            return path, used + row + 1
        used += n
    raise BudgetError(f"no acceptance for L = {L} within {budget} attempts", attempts=budget)


def _rejection_engine_many(L, params, rng, n_samples, budget, mode, start_law):
    if L < 1:
        raise DomainError("length must be >= 1")
    if n_samples < 1:
        raise DomainError("need n_samples >= 1")
    if budget is None:
        budget = n_samples * default_budget(L)
    n_rows, n_cols = _batch_layout(L, budget, n_samples=n_samples)
    out = []
    used = 0
    while used < budget and len(out) < n_samples:
        n = min(n_rows, budget - used)
        for row, path in _run_batch(L, params, rng, n, n_cols, mode, start_law, first_only=False):
            out.append((path, used + row + 1))
        used += n
    if len(out) < n_samples:
        raise BudgetError(
            f"{len(out)}/{n_samples} acceptances for L = {L} within {budget} attempts",
            attempts=budget,
        )
    return out[:n_samples]


def sample_critical_walk(
    L: int,
    params: ModelParams,
    rng: np.random.Generator,
    attempt_budget: int | None = None,
) -> AcceptedSample:
    """One walk from the critical law conditioned to close at length L.

    Simulates from 0 until the clock first reaches L, rejects overshoots,
    and on an exact hit accepts iff the following value is 0.
    """
    _require_critical(params)
    path, attempts = _rejection_engine(L, params, rng, attempt_budget, "terminal", "zero")
    return AcceptedSample(WalkPath(path, start_law="zero"), attempts)


def sample_critical_polymer(
    L: int,
    params: ModelParams,
    rng: np.random.Generator,
    attempt_budget: int | None = None,
):
    """One configuration from the length-L critical polymer law."""
    sample = sample_critical_walk(L, params, rng, attempt_budget)
    values = sample.walk.values
    cfg = walk_to_stretches(values, len(values) - 2)
    if cfg.total_length != L:
        raise AssertionError("accepted walk does not close at the target length")
    return cfg, sample


def sample_critical_walk_many(
    L: int,
    params: ModelParams,
    rng: np.random.Generator,
    n_samples: int,
    attempt_budget: int | None = None,
) -> list:
    """n_samples independent draws from the conditioned critical law.

    Batched version of sample_critical_walk for mass statistics; the budget
    is a total across all samples, defaulting to n_samples times the
    single-sample default.
    """
    _require_critical(params)
    pairs = _rejection_engine_many(L, params, rng, n_samples, attempt_budget, "terminal", "zero")
    return [AcceptedSample(WalkPath(p, start_law="zero"), a) for p, a in pairs]


def sample_renewal_conditioned(
    L: int,
    params: ModelParams,
    rng: np.random.Generator,
    start_law: str = "zero",
    attempt_budget: int | None = None,
) -> AcceptedSample:
    """One walk conditioned on L being a renewal point, truncated there."""
    if start_law not in ("zero", "mu_beta"):
        raise ValidationError(f"unknown start law {start_law!r}")
    law = "zero" if start_law == "zero" else "mu"
    path, attempts = _rejection_engine(L, params, rng, attempt_budget, "renewal", law)
    return AcceptedSample(WalkPath(path, start_law=start_law), attempts)


def sample_renewal_conditioned_many(
    L: int,
    params: ModelParams,
    rng: np.random.Generator,
    n_samples: int,
    start_law: str = "zero",
    attempt_budget: int | None = None,
) -> list:
    """Batched renewal-conditioned draws; see sample_critical_walk_many."""
    if start_law not in ("zero", "mu_beta"):
        raise ValidationError(f"unknown start law {start_law!r}")
    law = "zero" if start_law == "zero" else "mu"
    pairs = _rejection_engine_many(L, params, rng, n_samples, attempt_budget, "renewal", law)
    return [AcceptedSample(WalkPath(p, start_law=start_law), a) for p, a in pairs]


def sample_excursion_area(
    target: int,
    params: ModelParams,
    rng: np.random.Generator,
    start_law: str = "zero",
    attempt_budget: int = 2_000_000,
) -> AcceptedSample:
    """One first excursion conditioned to carry weight exactly `target`.

    Rejection on the first excursion; attempts whose running weight already
    exceeds the target are cut early.  Kept for cross-validating the
    compositional reconstruction; end-to-end sampling goes through the
    global engine instead.
    """
    minimum = 3 if start_law == "zero" else 1
    if target < minimum:
        raise DomainError(
            f"first-excursion weight under a {start_law} start is >= {minimum}"
        )
    n_cols = min(target + 2, 512)
    n_rows = max(16, min(8192, int(2_000_000 / n_cols)))
    used = 0
    while used < attempt_budget:
        n = min(n_rows, attempt_budget - used)
        if start_law == "zero":
            v0 = np.zeros(n, dtype=np.int64)
        else:
            v0 = sample_increments(params, n, rng, law="mu")
        v_carry, k_carry = v0.copy(), np.zeros(n, dtype=np.int64)
        alive = np.arange(n)
        history = [(alive, v0[:, None].copy())]
        while len(alive):
            incs = sample_increments(params, (len(alive), n_cols), rng)
            vp = v_carry[:, None] + np.cumsum(incs, axis=1)
            wp = k_carry[:, None] + np.cumsum(1 + np.abs(vp), axis=1)
            history.append((alive, vp))
            prev = np.concatenate([v_carry[:, None], vp[:, :-1]], axis=1)
            stop = (prev != 0) & (prev * vp <= 0)
            has = stop.any(axis=1)
            t = np.argmax(stop, axis=1)
            rows = np.flatnonzero(has)
            accept = wp[rows, t[rows]] == target
            hits = np.flatnonzero(accept)
            if len(hits):
                r = hits[0]
                row = int(alive[rows[r]])
                pieces = []
                for ids, chunk in history[:-1]:
                    pos = int(np.searchsorted(ids, row))
                    pieces.append(chunk[pos])
                pieces.append(vp[rows[r], : t[rows[r]] + 1])
                path = np.concatenate(pieces)
                return AcceptedSample(
                    WalkPath(path, start_law=start_law), used + row + 1
                )
            # drop stopped rows and rows already over budget
            keep = ~has & (wp[:, -1] <= target)
            alive = alive[keep]
            history = [(ids, chunk[np.isin(ids, alive)]) for ids, chunk in history]
            v_carry = vp[keep, -1]
            k_carry = wp[keep, -1]
        used += n
    raise BudgetError(
        f"no excursion of weight {target} within {attempt_budget} attempts",
        attempts=attempt_budget,
    )


def sample_excursion_area_many(
    target: int,
    params: ModelParams,
    rng: np.random.Generator,
    n_samples: int,
    start_law: str = "zero",
    attempt_budget: int = 50_000_000,
) -> list:
    """Batched area-conditioned excursions for small targets.

    The stopping time of a weight-`target` excursion is at most `target`, so
    one fixed-horizon draw decides every attempt in a batch.
    """
    minimum = 3 if start_law == "zero" else 1
    if target < minimum:
        raise DomainError(
            f"first-excursion weight under a {start_law} start is >= {minimum}"
        )
    if target > 512:
        raise SizeError("batched excursion sampling is for targets <= 512")
    n_cols = target
    n_rows = max(256, min(65536, int(4_000_000 / max(n_cols, 1))))
    out = []
    used = 0
    while used < attempt_budget and len(out) < n_samples:
        n = min(n_rows, attempt_budget - used)
        if start_law == "zero":
            v0 = np.zeros(n, dtype=np.int64)
        else:
            v0 = sample_increments(params, n, rng, law="mu")
        incs = sample_increments(params, (n, n_cols), rng)
        vp = v0[:, None] + np.cumsum(incs, axis=1)
        wp = np.cumsum(1 + np.abs(vp), axis=1)
        prev = np.concatenate([v0[:, None], vp[:, :-1]], axis=1)
        stop = (prev != 0) & (prev * vp <= 0)
        has = stop.any(axis=1)
        t = np.argmax(stop, axis=1)
        rows = np.flatnonzero(has & (wp[np.arange(n), t] == target))
        for r in rows:
            path = np.concatenate([[v0[r]], vp[r, : t[r] + 1]])
            out.append(AcceptedSample(WalkPath(path, start_law=start_law), used + int(r) + 1))
        used += n
    if len(out) < n_samples:
        raise BudgetError(
            f"{len(out)}/{n_samples} excursions of weight {target} "
            f"within {attempt_budget} attempts",
            attempts=attempt_budget,
        )
    return out[:n_samples]


def trailing_zero_run(sample_walk: WalkPath) -> int:
    """Zeros at the end of the accepted walk beyond the one required."""
    v = sample_walk.values
    run = 0
    for val in v[::-1]:
        if val != 0:
            break
        run += 1
    return max(run - 1, 0)


def conditioned_walk_law_exact(L: int, params: ModelParams, cap: int = ENUMERATION_CAP):
    """Exact law of the conditioned walk by exhaustive enumeration.

    Enumerates every zero-start trajectory whose clock hits L exactly and
    closes at 0, weighting by products of increment masses.  The support is
    in bijection with the configuration space, so the same cap applies.
    Doubles as the oracle for the critical sampler and, through the
    alternating-sign map, for the polymer law itself.
    """
    if count_configs(L) > cap:
        raise SizeError(f"enumeration at L = {L} exceeds the cap {cap}")
    x = params.magnitude_ratio
    c = params.c_beta

    def p(k):
        return x ** abs(k) / c

    out = {}

    def visit(vals, charge, prob):
        v = vals[-1]
        room = L - charge
        for w in range(-(room - 1), room):
            q = prob * p(w - v)
            new_charge = charge + 1 + abs(w)
            if new_charge == L:
                out[tuple(vals + [w, 0])] = q * p(-w)
            else:
                visit(vals + [w], new_charge, q)

    visit([0], 0, 1.0)
    total = sum(out.values())
    return {traj: q / total for traj, q in out.items()}
