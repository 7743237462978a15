#!/usr/bin/env python3
"""Terminal zero-run survival at production lengths.

Samples conditioned critical walks at each length, tabulates the survival of
the terminal zero run y (the count of trailing zeros before the closing
step), and compares successive survival ratios against the geometric target
1/c_beta.  Writes one CSV with all tables and a JSON summary into --out.

Run from the repository root:

    python scripts/run_tightness.py --out results
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ipdsaw.model import critical_beta, make_params  # noqa: E402
from ipdsaw.rng import stream  # noqa: E402
from ipdsaw.sampler import sample_critical_walk_many  # noqa: E402
from ipdsaw.stats import yl_statistic  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lengths", default="1000,10000")
    ap.add_argument("--replicas", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--min-trials", type=int, default=100, help="ratio rows need this many survivors")
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    params = make_params(critical_beta())
    target = 1.0 / params.c_beta
    lengths = [int(tok) for tok in args.lengths.split(",") if tok]

    args.out.mkdir(parents=True, exist_ok=True)
    summary = {"target": target, "replicas": args.replicas, "lengths": {}}
    ok = True
    with open(args.out / "yl_survival.csv", "w") as f:
        f.write("L,k,survival,stderr\n")
        for li, L in enumerate(lengths):
            t0 = time.time()
            samples = sample_critical_walk_many(L, params, stream(args.seed + li), args.replicas)
            table = yl_statistic(samples, min_replicas=min(args.replicas, 10_000))
            print(f"L = {L}: sampled {args.replicas} in {time.time() - t0:.0f}s")
            for k, s, se in zip(table.k, table.survival, table.stderr):
                f.write(f"{L},{k},{s:.10g},{se:.10g}\n")
            ratios = []
            for k in range(len(table.k) - 1):
                trials = table.survival[k] * table.n_replicas
                if trials < args.min_trials:
                    break
                r = table.survival[k + 1] / table.survival[k]
                se = math.sqrt(max(r * (1.0 - r), 1e-12) / trials)
                z = (r - target) / se
                ratios.append({"k": int(k), "ratio": r, "stderr": se, "z": z})
                print(f"  k = {k}: ratio = {r:.4f} (target {target:.4f}, z = {z:+.2f})")
                ok = ok and abs(z) <= 3.0
            try:
                cutoff = table.uniform_cutoff(0.05)
                print(f"  cutoff k0 with survival < 0.05: {cutoff}")
            except Exception:
                cutoff = None
                ok = False
                print("  no cutoff below 0.05 in this table")
            summary["lengths"][str(L)] = {"ratios": ratios, "cutoff": cutoff}
    (args.out / "yl_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"geometric survival within 3 se everywhere: {'OK' if ok else 'FAIL'}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
