"""Command-line front end wiring the toolkit into reproducible runs.

Every command that writes files does so atomically and drops a JSON manifest
next to the primary output recording the exact invocation.  Data files carry
no timestamps (only the manifest does), so rerunning a manifest's command
line reproduces them byte for byte.  Replicated commands draw replica i from
stream(master_seed, i), which makes the output independent of the worker
count.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__, geometry, stats
from .continuum import sample_conditioned_limit
from .errors import BudgetError, IpdsawError
from .model import (
    count_configs,
    critical_beta,
    exact_polymer_law,
    hamiltonian_stretch,
    make_params,
    stretches_to_lattice,
    walk_to_stretches,
)
from .rng import stream
from .sampler import (
    conditioned_walk_law_exact,
    sample_critical_walk_many,
    trailing_zero_run,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3

JOBS_ENV = "IPDSAW_JOBS"


# ---------------------------------------------------------------------------
# Plumbing


def _beta_arg(text: str) -> float:
    if text == "critical":
        return critical_beta()
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"beta must be a number or 'critical', got {text!r}"
        ) from None


def _lengths_arg(text: str) -> tuple:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"lengths must be comma-separated integers, got {text!r}"
        ) from None


def _count_or_all(text: str):
    if text == "all":
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected an integer or 'all', got {text!r}"
        ) from None


def _resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        jobs = int(os.environ.get(JOBS_ENV, "1"))
    return max(1, jobs)


def _write_atomic(path: Path, text: str) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _emit_manifest(args, out_path: Path, replica_count: int, extra: dict | None = None):
    """RunManifest next to the output: enough to byte-reproduce the data."""
    parameters = {
        k: _jsonable(v)
        for k, v in vars(args).items()
        if k not in ("func", "command", "out")
    }
    if extra:
        parameters.update(_jsonable(extra))
    manifest = {
        "command": args.command,
        "parameters": parameters,
        "master_seed": getattr(args, "seed", None),
        "replica_count": replica_count,
        "toolkit_version": __version__,
        "output_paths": [str(out_path)],
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = Path(str(out_path) + ".manifest.json")
    _write_atomic(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _deliver(args, text: str, replica_count: int, extra: dict | None = None) -> int:
    """Write atomically with a manifest when --out is given, else print."""
    if getattr(args, "out", None):
        out = _write_atomic(Path(args.out), text)
        _emit_manifest(args, out, replica_count, extra)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _map_replicas(worker, n_replicas: int, jobs: int) -> list:
    """worker(replica_index) for 0..n-1, merged in index order.

    Replica i draws only from stream(master_seed, i), so any split across
    processes returns identical records.
    """
    if n_replicas < 1:
        raise IpdsawError("need at least one replica")
    if jobs <= 1 or n_replicas == 1:
        return [worker(i) for i in range(n_replicas)]
    chunk = max(1, n_replicas // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, range(n_replicas), chunksize=chunk))


# Replica workers live at module scope so process pools can pickle them.


def _polymer_record(beta, L, seed, budget, as_stretches, i):
    params = make_params(beta)
    sample = sample_critical_walk_many(L, params, stream(seed, i), 1, budget)[0]
    return sample.to_json(seed_index=i, as_stretches=as_stretches)


def _limit_record(sigma2, dt, epsilon, seed, budget, i):
    sample = sample_conditioned_limit(
        sigma2, dt=dt, epsilon=epsilon, rng=stream(seed, i), attempt_budget=budget
    )
    return {
        "seed_index": i,
        "dt": dt,
        "epsilon": epsilon,
        "sigma2": sigma2,
        "a1": sample.a1,
        "attempts": sample.attempts,
        "B": [float(v) for v in sample.B.values],
        "D": [float(v) for v in sample.D.values],
    }


def _zero_run_record(beta, L, seed, budget, i):
    params = make_params(beta)
    sample = sample_critical_walk_many(L, params, stream(seed, i), 1, budget)[0]
    return trailing_zero_run(sample.walk)


def _hausdorff_record(beta, L, seed, budget, i):
    params = make_params(beta)
    sample = sample_critical_walk_many(L, params, stream(seed, i), 1, budget)[0]
    vals = sample.walk.values
    cfg = walk_to_stretches(vals, len(vals) - 2)
    band = geometry.align_band_to_squares(geometry.polymer_band(cfg, L), L)
    occ = geometry.rescale(
        geometry.occupied_set(stretches_to_lattice(cfg)), L ** (2 / 3), L ** (1 / 3)
    )
    d = geometry.hausdorff(band, occ)
    return {
        "replica": i,
        "distance": d.value,
        "error_bound": d.error_bound,
        "pitch": d.pitch,
        "attempts": sample.attempts,
    }


# ---------------------------------------------------------------------------
# Subcommands


def cmd_params(args) -> int:
    params = make_params(args.beta)
    x = params.magnitude_ratio
    lines = [
        f"beta             = {params.beta:.17g}",
        f"magnitude_ratio  = {x:.17g}",
        f"c_beta           = {params.c_beta:.17g}",
        f"sigma2           = {params.sigma2:.17g}",
        f"gamma_beta       = {params.gamma_beta:.17g}",
        f"cubic_residual   = {x ** 3 + x ** 2 + x - 1:.3e}",
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        payload = {
            "beta": params.beta,
            "magnitude_ratio": x,
            "c_beta": params.c_beta,
            "sigma2": params.sigma2,
            "gamma_beta": params.gamma_beta,
        }
        return _deliver(args, json.dumps(payload, indent=2) + "\n", 0)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sample_polymer(args) -> int:
    worker = partial(
        _polymer_record, args.beta, args.length, args.seed, args.budget, args.stretches
    )
    records = _map_replicas(worker, args.replicas, _resolve_jobs(args.jobs))
    text = "\n".join(json.dumps(r) for r in records) + "\n"
    return _deliver(args, text, args.replicas)


def cmd_sample_limit(args) -> int:
    sigma2 = make_params(args.beta).sigma2
    worker = partial(_limit_record, sigma2, args.dt, args.epsilon, args.seed, args.budget)
    records = _map_replicas(worker, args.replicas, _resolve_jobs(args.jobs))
    text = "\n".join(json.dumps(r) for r in records) + "\n"
    return _deliver(args, text, args.replicas, extra={"sigma2": sigma2})


def cmd_enumerate(args) -> int:
    Z, law = exact_polymer_law(args.length, args.beta)
    rows = ["stretches,n_stretches,energy,probability"]
    for cfg, p in law.items():
        stretches = "|".join(str(s) for s in cfg.stretches)
        rows.append(f"{stretches},{cfg.n_stretches},{hamiltonian_stretch(cfg)},{p:.17g}")
    text = "\n".join(rows) + "\n"
    status = _deliver(args, text, 0, extra={"Z": Z, "count": count_configs(args.length)})
    if args.out:
        print(f"|Omega_{args.length}| = {count_configs(args.length)}, Z = {Z:.12g}")
    return status


def cmd_verify_theorem_b(args) -> int:
    params = make_params(args.beta)
    _, polymer_law = exact_polymer_law(args.length, args.beta)
    walk_law = conditioned_walk_law_exact(args.length, params)
    pushforward = defaultdict(float)
    for traj, p in walk_law.items():
        pushforward[walk_to_stretches(traj, len(traj) - 2)] += p
    support = set(polymer_law) | set(pushforward)
    tv = 0.5 * sum(
        abs(polymer_law.get(c, 0.0) - pushforward.get(c, 0.0)) for c in support
    )
    ok = tv < args.tol
    print(
        f"L = {args.length}: total variation {tv:.3e} "
        f"{'<' if ok else '>='} tolerance {args.tol:.1e}"
    )
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_stats_tail(args) -> int:
    params = make_params(args.beta)
    rng = stream(args.seed)
    if args.kind == "excursion":
        lo = args.fit_lo if args.fit_lo is not None else 30.0
        hi = args.fit_hi if args.fit_hi is not None else min(args.cap / 4.0, 50_000.0)
        weights = stats.excursion_weights(params, args.excursions, rng, args.cap)
        fit = stats.fit_tail_exponent(weights.astype(float), (lo, hi))
        edges = np.geomspace(lo, hi, 25)
        counts, _ = np.histogram(weights[(weights >= lo) & (weights <= hi)], edges)
        dens = counts / (len(weights) * np.diff(edges))
        centers = np.sqrt(edges[:-1] * edges[1:])
        rows = ["center,density"]
        rows += [f"{c:.10g},{d:.10g}" for c, d in zip(centers, dens) if d > 0]
        target = 4.0 / 3.0
        replica_count = args.excursions
    else:
        lo = args.fit_lo if args.fit_lo is not None else 100.0
        hi = args.fit_hi if args.fit_hi is not None else 10_000.0
        grid = np.unique(np.geomspace(lo, hi, 16).astype(np.int64))
        n_vals, freq, se = stats.renewal_mass_table(
            params, rng, n_values=grid, n_replicas=args.replicas
        )
        fit = stats.fit_tail_exponent((n_vals.astype(float), freq), (lo, hi))
        rows = ["n,mass,stderr"]
        rows += [f"{int(n)},{m:.10g},{e:.10g}" for n, m, e in zip(n_vals, freq, se)]
        target = 2.0 / 3.0
        replica_count = args.replicas
    text = "\n".join(rows) + "\n"
    print(
        f"{args.kind} tail exponent = {fit.exponent:.4f} +/- {fit.stderr:.4f} "
        f"(target {target:.4f}, {fit.n_points} points)"
    )
    return _deliver(
        args,
        text,
        replica_count,
        extra={"exponent": fit.exponent, "stderr": fit.stderr, "target": target},
    )


def cmd_stats_yl(args) -> int:
    worker = partial(_zero_run_record, args.beta, args.length, args.seed, args.budget)
    runs = _map_replicas(worker, args.replicas, _resolve_jobs(args.jobs))
    table = stats.yl_statistic(np.asarray(runs), k_max=args.k_max)
    inv_c = 1.0 / make_params(args.beta).c_beta
    rows = ["k,survival,stderr"]
    rows += [
        f"{int(k)},{s:.10g},{e:.10g}"
        for k, s, e in zip(table.k, table.survival, table.stderr)
    ]
    text = "\n".join(rows) + "\n"
    ratios = table.survival[1:4] / np.maximum(table.survival[:3], 1e-300)
    print(f"survival ratios (first 3): {np.array2string(ratios, precision=4)}")
    print(f"target geometric ratio 1/c_beta = {inv_c:.6f}")
    try:
        print(f"uniform cutoff k0 (level 0.05): {table.uniform_cutoff()}")
    except IpdsawError:
        print("no uniform cutoff below level 0.05 in this table")
    return _deliver(args, text, args.replicas, extra={"inv_c_beta": inv_c})


def cmd_shape(args) -> int:
    params = make_params(args.beta)
    config = stats.ShapeConfig(
        lengths=args.lengths,
        replicas=args.replicas,
        seed_groups=args.groups,
        master_seed=args.seed,
        dt=args.dt,
        epsilon=args.epsilon,
        harvest_n=args.harvest_n,
        harvest_seed=args.harvest_seed,
        hausdorff_replicas=args.hausdorff_replicas,
        hausdorff_pitch_divisor=args.pitch_divisor,
        cache_dir=args.cache,
        attempt_budget=args.budget,
    )
    result = stats.shape_experiment(params, config)
    buf = io.StringIO()
    result.to_csv(buf)
    med = result.median_over_groups("ks_extension")
    for L, value in med.items():
        print(f"L = {L}: median KS(extension/L^(2/3), a1) = {value:.4f}")
    return _deliver(args, buf.getvalue(), args.replicas, extra=result.manifest)


def cmd_hausdorff(args) -> int:
    worker = partial(_hausdorff_record, args.beta, args.length, args.seed, args.budget)
    records = _map_replicas(worker, args.replicas, _resolve_jobs(args.jobs))
    bound = args.length ** (-1.0 / 3.0)
    rows = ["replica,distance,error_bound,pitch,bound,attempts"]
    rows += [
        f"{r['replica']},{r['distance']:.10g},{r['error_bound']:.10g},"
        f"{r['pitch']:.10g},{bound:.10g},{r['attempts']}"
        for r in records
    ]
    text = "\n".join(rows) + "\n"
    worst = max(r["distance"] for r in records)
    ok = worst <= bound
    print(
        f"max band/occupied-set distance {worst:.6g} "
        f"{'<=' if ok else '>'} bound L^(-1/3) = {bound:.6g} over {len(records)} paths"
    )
    status = _deliver(args, text, args.replicas)
    return status if ok else EXIT_FAILURE


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="ipdsaw",
        description="Exact sampling and verification for the critical polymer model.",
    )
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument(
            "--beta",
            type=_beta_arg,
            default="critical",
            help="coupling, a number or 'critical' (default: critical)",
        )
        return p

    p = add("params", cmd_params, "print model constants for a coupling")
    p.add_argument("--out", default=None, help="write constants as JSON")

    p = add("sample-polymer", cmd_sample_polymer, "exact critical polymer samples")
    p.add_argument("--length", type=int, required=True, help="total length L")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--replicas", type=int, default=1, help="samples to draw (default 1)")
    p.add_argument("--jobs", type=int, default=None, help=f"workers (default ${JOBS_ENV} or 1)")
    p.add_argument("--budget", type=int, default=None, help="attempts per replica (default 200 ceil(L^(2/3)))")
    p.add_argument("--stretches", action="store_true", help="emit stretch form instead of walk values")
    p.add_argument("--out", default=None, help="JSON-Lines output path (default stdout)")

    p = add("sample-limit", cmd_sample_limit, "conditioned continuum pair samples")
    p.add_argument("--dt", type=float, default=1e-3, help="grid step (default 1e-3)")
    p.add_argument("--epsilon", type=float, default=0.1, help="endpoint tolerance (default 0.1)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--replicas", type=int, default=1, help="samples to draw (default 1)")
    p.add_argument("--jobs", type=int, default=None, help=f"workers (default ${JOBS_ENV} or 1)")
    p.add_argument("--budget", type=int, default=1_000_000, help="attempts per replica (default 1e6)")
    p.add_argument("--out", default=None, help="JSON-Lines output path (default stdout)")

    p = add("enumerate", cmd_enumerate, "exact polymer law by enumeration")
    p.add_argument("--length", type=int, required=True, help="total length L (small)")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")

    p = add("verify-theorem-b", cmd_verify_theorem_b, "walk-representation exactness check")
    p.add_argument("--length", type=int, default=6, help="total length L (default 6)")
    p.add_argument("--tol", type=float, default=1e-12, help="total-variation tolerance (default 1e-12)")

    p = add("stats-tail", cmd_stats_tail, "tail exponent of excursion weights or renewal mass")
    p.add_argument("--kind", choices=("excursion", "renewal"), default="excursion")
    p.add_argument("--excursions", type=int, default=200_000, help="replicas, excursion kind (default 2e5)")
    p.add_argument("--replicas", type=int, default=20_000, help="replicas, renewal kind (default 2e4)")
    p.add_argument("--cap", type=int, default=200_000, help="censoring weight cap (default 2e5)")
    p.add_argument("--fit-lo", type=float, default=None, help="fit range low end")
    p.add_argument("--fit-hi", type=float, default=None, help="fit range high end")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")

    p = add("stats-yl", cmd_stats_yl, "terminal zero-run survival table")
    p.add_argument("--length", type=int, required=True, help="total length L")
    p.add_argument("--replicas", type=int, default=10_000, help="samples (default 1e4)")
    p.add_argument("--k-max", type=int, default=None, help="largest k in the table")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=None, help=f"workers (default ${JOBS_ENV} or 1)")
    p.add_argument("--budget", type=int, default=None, help="attempts per replica")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")

    p = add("shape", cmd_shape, "rescaled-shape convergence experiment")
    p.add_argument("--lengths", type=_lengths_arg, default=(2000, 8000, 32000),
                   help="comma-separated lengths (default 2000,8000,32000)")
    p.add_argument("--replicas", type=int, default=320, help="samples per (length, group) (default 320)")
    p.add_argument("--groups", type=int, default=5, help="seed groups (default 5)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--dt", type=float, default=1e-4, help="continuum grid step (default 1e-4)")
    p.add_argument("--epsilon", type=float, default=0.02, help="continuum tolerance (default 0.02)")
    p.add_argument("--harvest-n", type=int, default=10_000, help="continuum reference size (default 1e4)")
    p.add_argument("--harvest-seed", type=int, default=0, help="continuum reference seed (default 0)")
    p.add_argument("--hausdorff-replicas", type=_count_or_all, default=3,
                   help="paths per cell for set distance, or 'all' (default 3)")
    p.add_argument("--pitch-divisor", type=float, default=8.0,
                   help="set-distance grid pitch = min(1, L^(-1/3)) / divisor (default 8)")
    p.add_argument("--cache", default=None, help="continuum reference cache directory")
    p.add_argument("--budget", type=int, default=None, help="total attempts per (length, group)")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")

    p = add("hausdorff", cmd_hausdorff, "band vs occupied-set distance on sampled paths")
    p.add_argument("--length", type=int, required=True, help="total length L")
    p.add_argument("--replicas", type=int, default=1, help="sampled paths (default 1)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=None, help=f"workers (default ${JOBS_ENV} or 1)")
    p.add_argument("--budget", type=int, default=None, help="attempts per replica")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except IpdsawError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
