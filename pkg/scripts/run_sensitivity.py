#!/usr/bin/env python3
"""Sensitivity experiments: token-bucket size and survival-estimate noise.

Part 1 regenerates the sales benchmark at bucket sizes 2, 5, 15 and 45
(refill rates stay put, so only the allowed burst changes) and compares the
learned threshold rule, the best fixed-threshold baseline, and the learned
set rule. Part 2 corrupts the survival estimates the policies consume with
truncated Gaussian noise (std 0.05 / 0.10 / 0.15) while scoring against
clean realized bids, measuring how gracefully each rule degrades.

Writes sensitivity-bucket.csv and sensitivity-noise.csv under --out-dir.
"""

import argparse
import csv
import pathlib
import sys
import time

from calloutsim.harness import (
    BUCKET_GRID,
    THRESHOLD_GRID,
    generate_benchmark,
    peak_by_kind,
    run_two_phase,
    sweep,
)
from calloutsim.policies import PolicyParams

NOISE_GRID = (0.0, 0.05, 0.10, 0.15)


def bucket_experiment(args, out_dir: pathlib.Path) -> None:
    print("bucket-size sweep (sales per impression at the policy's best "
          "threshold)")
    rows = []
    for cap in BUCKET_GRID:
        sc = generate_benchmark(args.scenario_seed, kind=args.kind,
                                bucket_capacity=cap)
        t0 = time.perf_counter()
        reports = sweep(
            sc, "threshold",
            threshold_grid=THRESHOLD_GRID,
            t_explore=args.samples, m_exploit=args.impressions,
            replications=args.reps, seed=args.seed, workers=args.workers,
        )
        reports.append(run_two_phase(
            sc, PolicyParams("lp-val"),
            t_explore=args.samples, m_exploit=args.impressions,
            replications=args.reps, seed=args.seed, workers=args.workers,
        ))
        dt = time.perf_counter() - t0
        peaks = peak_by_kind(reports, "sales")
        line = f"  bucket {cap:>4g}:"
        for kind in ("th-lp", "th-prob", "lp-val"):
            rep = peaks[kind]
            line += f"  {kind} {rep.sales_mean:.4f}+-{rep.sales_ci:.4f}"
            rows.append({
                "bucket": cap, "policy": rep.param_label(),
                "sales_mean": f"{rep.sales_mean:.9g}",
                "sales_ci": f"{rep.sales_ci:.9g}",
            })
        print(line + f"  ({dt:.0f}s)")
    _dump(out_dir / "sensitivity-bucket.csv", rows)


def noise_experiment(args, out_dir: pathlib.Path) -> None:
    print("\nsurvival-noise sweep (estimates corrupted, realized bids clean)")
    sc = generate_benchmark(args.scenario_seed, kind=args.kind)
    rows = []
    for std in NOISE_GRID:
        t0 = time.perf_counter()
        line = f"  noise std {std:.2f}:"
        for params in (PolicyParams("th-lp", threshold=1.5),
                       PolicyParams("th-prob", threshold=1.5),
                       PolicyParams("lp-val")):
            rep = run_two_phase(
                sc, params, noise_std=std or None,
                t_explore=args.samples, m_exploit=args.impressions,
                replications=args.reps, seed=args.seed, workers=args.workers,
            )
            line += f"  {params.kind} {rep.sales_mean:.4f}+-{rep.sales_ci:.4f}"
            rows.append({
                "noise_std": std, "policy": rep.param_label(),
                "sales_mean": f"{rep.sales_mean:.9g}",
                "sales_ci": f"{rep.sales_ci:.9g}",
            })
        print(line + f"  ({time.perf_counter() - t0:.0f}s)")
    _dump(out_dir / "sensitivity-noise.csv", rows)


def _dump(path: pathlib.Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"  -> {path}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", choices=("gaussian", "pareto"), default="gaussian")
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--scenario-seed", type=int, default=42)
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--impressions", type=int, default=2000)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--skip-bucket", action="store_true")
    ap.add_argument("--skip-noise", action="store_true")
    args = ap.parse_args(argv)

    out_dir = pathlib.Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not args.skip_bucket:
        bucket_experiment(args, out_dir)
    if not args.skip_noise:
        noise_experiment(args, out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
