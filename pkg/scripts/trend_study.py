#!/usr/bin/env python3
"""Mitigation trend study on a filtered random testbed.

Generates a pool of accepted ring instances (two antipodal ground states,
a large first-excited manifold), ranks them by baseline ground-state
probability, keeps the hardest, and runs damped offset mitigation,
antimitigation, and optionally the compensated control on each. Reports
per-instance p_GS before/after plus the minimum-third-gap direction, and
a sign test over the kept set.

Outputs under --out:
  runs.csv       one row per instance: baseline/mitigated/antimitigated/
                 compensated p_GS and min third gaps
  summary.json   medians, win counts, sign-test p-values
"""

import argparse
import csv
import json
import os
import time

import numpy as np
from scipy.stats import binomtest

from offsetqa import (MitigationConfig, SamplerConfig, antimitigation_run,
                      antipodal_ring_pool, baseline_runs, default_schedule,
                      hardest_first, run_mitigation, variant_gap_table)


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pool-size", type=int, default=40)
    ap.add_argument("--keep", type=int, default=20,
                    help="number of hardest instances to study")
    ap.add_argument("--seed", type=int, default=9)
    ap.add_argument("--ring-size", type=int, default=16)
    ap.add_argument("--chords", type=int, default=2)
    ap.add_argument("--alpha", type=float, default=0.04)
    ap.add_argument("--iterations", type=int, default=4)
    ap.add_argument("--anneal-time", type=float, default=20.0)
    ap.add_argument("--shots", type=int, default=10_000)
    ap.add_argument("--compensated", action="store_true",
                    help="also run the coupling-compensated control")
    ap.add_argument("--gap-points", type=int, default=14)
    ap.add_argument("--out", default="trend_study")
    return ap.parse_args()


def main():
    args = parse_args()
    os.makedirs(args.out, exist_ok=True)
    schedule = default_schedule()
    sampler = SamplerConfig(backend="schrodinger", shots=args.shots,
                            seed=0, anneal_time=args.anneal_time,
                            slice_rel_tol=4e-3)
    gap_grid = np.linspace(0.30, 0.95, args.gap_points)

    t0 = time.time()
    pool = antipodal_ring_pool(count=args.pool_size, seed=args.seed,
                               n=args.ring_size, n_chords=args.chords)
    print(f"pool: {pool.stats.accepted} accepted of "
          f"{pool.stats.candidates} candidates [{time.time() - t0:.0f}s]")
    runs = hardest_first(baseline_runs(pool.instances, schedule, sampler))
    runs = runs[:args.keep]
    print(f"kept {len(runs)} hardest, baseline p_GS "
          f"{runs[0].p_gs:.3f} .. {runs[-1].p_gs:.3f}")

    rows = []
    for run in runs:
        cfg = MitigationConfig(alpha=args.alpha,
                               n_iterations=args.iterations,
                               sampler=sampler.with_seed(run.seed))
        mit = run_mitigation(run.instance, schedule, cfg,
                             ground_states=run.ground_states)
        anti = antimitigation_run(run.instance, schedule, cfg,
                                  ground_states=run.ground_states)
        row = {
            "index": run.index,
            "p_baseline": mit.baseline_p_gs,
            "p_mitigated": mit.final_p_gs,
            "p_antimitigated": anti.final_p_gs,
        }
        variants = {"baseline": None, "mitigated": mit.final_offsets,
                    "antimitigated": anti.final_offsets}
        for g in variant_gap_table(run.instance, schedule, variants,
                                   s_grid=gap_grid):
            row[f"gap_{g.name}"] = g.min_third_gap
        rows.append(row)
        print(f"  idx={run.index:2d} p {row['p_baseline']:.3f}->"
              f"{row['p_mitigated']:.3f} (anti {row['p_antimitigated']:.3f})"
              f"  gap {row['gap_baseline']:.3f}->{row['gap_mitigated']:.3f}"
              f" (anti {row['gap_antimitigated']:.3f})"
              f" [{time.time() - t0:.0f}s]")

    if args.compensated:
        for run, row in zip(runs, rows):
            cfg = MitigationConfig(alpha=args.alpha,
                                   n_iterations=args.iterations,
                                   sampler=sampler.with_seed(run.seed),
                                   compensate=True)
            comp = run_mitigation(run.instance, schedule, cfg,
                                  ground_states=run.ground_states)
            row["p_comp_baseline"] = comp.baseline_p_gs
            row["p_comp_mitigated"] = comp.final_p_gs
            print(f"  idx={run.index:2d} compensated "
                  f"{comp.baseline_p_gs:.3f}->{comp.final_p_gs:.3f}")

    fields = sorted({k for row in rows for k in row}, key=lambda k: k != "index")
    with open(os.path.join(args.out, "runs.csv"), "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)

    delta = np.array([r["p_mitigated"] - r["p_baseline"] for r in rows])
    ups, downs = int(np.sum(delta > 0)), int(np.sum(delta < 0))
    summary = {
        "kept": len(rows),
        "median_baseline": float(np.median([r["p_baseline"] for r in rows])),
        "median_mitigated": float(np.median([r["p_mitigated"] for r in rows])),
        "median_improvement": float(np.median(delta)),
        "wins": ups,
        "losses": downs,
        "sign_test_p": float(binomtest(ups, ups + downs,
                                       alternative="greater").pvalue),
        "gap_widened": int(sum(r["gap_mitigated"] >= r["gap_baseline"]
                               for r in rows)),
        "gap_narrowed": int(sum(r["gap_antimitigated"] <= r["gap_baseline"]
                                for r in rows)),
    }
    if args.compensated:
        cdelta = np.array([r["p_comp_mitigated"] - r["p_comp_baseline"]
                           for r in rows])
        cups, cdowns = int(np.sum(cdelta > 0)), int(np.sum(cdelta < 0))
        summary["median_comp_improvement"] = float(np.median(cdelta))
        summary["comp_sign_test_p"] = float(
            binomtest(cups, cups + cdowns, alternative="greater").pvalue)
    with open(os.path.join(args.out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
