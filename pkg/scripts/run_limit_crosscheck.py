#!/usr/bin/env python3
"""Cross-validate the two continuum profile routes.

Harvests the conditioned-|B| marginals (the expensive side: acceptance
~0.5*eps^2, hours at the default scale) and compares them against the
Bessel-bridge route at budget fractions 0.25/0.5/0.75.  The harvest is cached
under --cache-dir, so the test suite and later runs reuse it.

Run from the repository root:

    python scripts/run_limit_crosscheck.py --n 10000 --out results
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ipdsaw.continuum import bessel_marginals, harvest_conditioned  # noqa: E402
from ipdsaw.rng import stream  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000, help="accepted replicas per route")
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--epsilon", type=float, default=0.02)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    cache = args.out / "continuum-cache"
    t0 = time.time()
    last = [0.0]

    def progress(batch, attempts, found):
        if time.time() - last[0] > 30:
            last[0] = time.time()
            rate = found / max(attempts, 1)
            print(
                f"[{time.time() - t0:8.0f}s] batch {batch} attempts {attempts} "
                f"accepted {found}/{args.n} (rate {rate:.2e})",
                flush=True,
            )

    hv = harvest_conditioned(
        n_accepted=args.n,
        dt=args.dt,
        epsilon=args.epsilon,
        seed=args.seed,
        cache_dir=cache,
        progress=progress,
    )
    print(f"harvest done: {hv.attempts} attempts, {time.time() - t0:.0f}s", flush=True)
    print("prescreen audit:", hv.leak_report(), flush=True)

    fracs = hv.marginal_fracs
    Y = bessel_marginals(args.n, args.dt, fracs, stream(args.seed, 7))
    report = {
        "n": args.n,
        "dt": args.dt,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "attempts": hv.attempts,
        "leak": hv.leak_report(),
        "marginals": {},
    }
    for i, s in enumerate(fracs):
        ks = ks_2samp(np.abs(hv.profile[:, i]), Y[:, i])
        report["marginals"][str(s)] = {
            "ks": float(ks.statistic),
            "p": float(ks.pvalue),
        }
        print(f"s = {s}: KS = {ks.statistic:.4f} (p = {ks.pvalue:.3g})", flush=True)

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "limit_crosscheck.json").write_text(json.dumps(report, indent=2))
    worst = max(m["ks"] for m in report["marginals"].values())
    print(f"worst marginal KS = {worst:.4f} ({'OK' if worst < 0.05 else 'FAIL'})")
    return 0 if worst < 0.05 else 1


if __name__ == "__main__":
    raise SystemExit(main())
