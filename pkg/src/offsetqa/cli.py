"""File-based experiment pipeline.

Each subcommand is a pure function from input files plus flags to output
files; a manifest.json with sha256 hashes of everything read and written
lands next to the outputs so any result can be replayed and verified.

Exit codes: 0 success, 1 replay mismatch, 2 validation, 3 solver, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .dynamics import SamplerConfig, escape_rate_proxy, sample
from .errors import SolverError, ValidationError
from .fixtures import gadget_certificate, pendant_ring_gadget
from .ising import (IsingInstance, SampleSet, enumerate_spectrum,
                    floppiness_fraction, ground_state_probability, s_cc_metric)
from .manifest import ExperimentManifest, verify_outputs
from .mitigation import MitigationConfig, run_mitigation
from .schedule import (AnnealSchedule, OffsetVector, compensate_couplings,
                       default_schedule)
from .spectra import gap_scan, minimize_gap
from .testbed import (antipodal_pool, antipodal_ring_pool, degenerate_pool,
                      raw_pool)

EXIT_OK = 0
EXIT_REPLAY_MISMATCH = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("OFFSETQA_JOBS", "1")))
    except ValueError:
        return 1


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, count = spec.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError as err:
        raise ValidationError(f"grid spec must be lo:hi:count, got {spec!r}") from err
    if count < 3 or not lo < hi:
        raise ValidationError("grid needs lo < hi and at least 3 points")
    return np.linspace(lo, hi, count)


def _parse_cells(spec: str) -> tuple:
    try:
        rows, cols = spec.lower().split("x")
        return int(rows), int(cols)
    except ValueError as err:
        raise ValidationError(f"cells spec must be RxC, got {spec!r}") from err


def _schedule_from_args(args) -> AnnealSchedule:
    if getattr(args, "schedule", None):
        return AnnealSchedule.load(args.schedule)
    return default_schedule()


def _sampler_from_args(args) -> SamplerConfig:
    return SamplerConfig(backend=args.backend, shots=args.shots, seed=args.seed,
                         anneal_time=args.anneal_time,
                         slice_rel_tol=args.slice_rel_tol,
                         temperature=args.temperature,
                         level_index=args.level_index)


def _manifest_for(args, argv, skip=("handler",)) -> ExperimentManifest:
    config = {k: v for k, v in vars(args).items()
              if k not in skip and not callable(v)}
    seeds = {"seed": args.seed} if hasattr(args, "seed") else {}
    return ExperimentManifest(command=args.command, argv=list(argv),
                              config=config, seeds=seeds,
                              tool_version=__version__)


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args, argv) -> None:
    os.makedirs(args.out, exist_ok=True)
    man = _manifest_for(args, argv)
    if args.fixture:
        instance = pendant_ring_gadget()
        cert = gadget_certificate()
        inst_path = os.path.join(args.out, "instance.json")
        cert_path = os.path.join(args.out, "certificate.json")
        instance.save(inst_path)
        _write_json(cert_path, cert)
        man.add_output("instance", inst_path, base=args.out)
        man.add_output("certificate", cert_path, base=args.out)
        man.save(args.out)
        return
    if args.graph == "ring":
        if args.filter_kind != "antipodal":
            raise ValidationError("ring pools support the antipodal filter only")
        pool = antipodal_ring_pool(count=args.count, seed=args.seed,
                                   n=args.ring_size, n_chords=args.chords,
                                   min_first_excited=args.min_first_excited,
                                   max_candidates=args.max_candidates,
                                   dedup=not args.no_dedup)
    else:
        rows, cols = _parse_cells(args.cells)
        kwargs = dict(count=args.count, seed=args.seed, rows=rows, cols=cols,
                      shore=args.shore, max_candidates=args.max_candidates,
                      dedup=not args.no_dedup)
        if args.filter_kind == "antipodal":
            pool = antipodal_pool(min_first_excited=args.min_first_excited,
                                  **kwargs)
        elif args.filter_kind == "degenerate":
            pool = degenerate_pool(min_degeneracy=args.min_degeneracy,
                                   max_degeneracy=args.max_degeneracy, **kwargs)
        else:
            pool = raw_pool(**kwargs)
    for idx, inst in enumerate(pool.instances):
        path = os.path.join(args.out, f"instance_{idx:04d}.json")
        inst.save(path)
        man.add_output(f"instance_{idx:04d}", path, base=args.out)
    stats = pool.stats
    report = {
        "kind": pool.kind,
        "candidates": stats.candidates,
        "accepted": stats.accepted,
        "duplicates": stats.duplicates,
        "acceptance_rate": stats.accepted / max(stats.candidates, 1),
        "rejections": stats.rejections,
        "ground_degeneracy_hist": {str(k): v for k, v
                                   in stats.ground_degeneracy_hist.items()},
    }
    report_path = os.path.join(args.out, "filter_report.json")
    _write_json(report_path, report)
    man.add_output("filter_report", report_path, base=args.out)
    man.save(args.out)


def cmd_spectrum(args, argv) -> None:
    os.makedirs(args.out, exist_ok=True)
    man = _manifest_for(args, argv)
    instance = IsingInstance.load(args.instance)
    man.add_input("instance", args.instance)
    offsets = None
    if args.offsets:
        offsets = OffsetVector.load(args.offsets)
        man.add_input("offsets", args.offsets)
    schedule = _schedule_from_args(args)
    grid = _parse_grid(args.grid)
    report = gap_scan(instance, schedule, grid, offsets=offsets, k=args.k,
                      uniform=args.uniform, dense_cutoff=args.dense_cutoff)
    csv_path = os.path.join(args.out, "spectrum.csv")
    report.save_csv(csv_path)
    man.add_output("spectrum", csv_path, base=args.out)
    if args.k >= 4:
        found = minimize_gap(report.s_grid, report.third_gaps())
        gap_path = os.path.join(args.out, "min_gap.json")
        _write_json(gap_path, {"min_third_gap": float(found.gap),
                               "s_at_min": float(found.s_target),
                               "refined": bool(found.refined),
                               "residual_max": report.diagnostics["residual_max"],
                               "method": report.diagnostics["method"]})
        man.add_output("min_gap", gap_path, base=args.out)
    man.save(args.out)


def cmd_anneal(args, argv) -> None:
    os.makedirs(args.out, exist_ok=True)
    man = _manifest_for(args, argv)
    instance = IsingInstance.load(args.instance)
    man.add_input("instance", args.instance)
    offsets = None
    if args.offsets:
        offsets = OffsetVector.load(args.offsets)
        man.add_input("offsets", args.offsets)
    schedule = _schedule_from_args(args)
    samples = sample(instance, schedule, offsets, _sampler_from_args(args))
    samples_path = os.path.join(args.out, "samples.csv")
    samples.save(samples_path)
    man.add_output("samples", samples_path, base=args.out)
    summary = {"backend": samples.sampler, "total": samples.total,
               "unique_states": len(samples.states)}
    summary.update({k: v for k, v in samples.metadata.items()
                    if isinstance(v, (int, float, str, bool))})
    summary_path = os.path.join(args.out, "summary.json")
    _write_json(summary_path, summary)
    man.add_output("summary", summary_path, base=args.out)
    man.save(args.out)


def _mitigation_config_from_args(args) -> MitigationConfig:
    return MitigationConfig(alpha=args.alpha, n_iterations=args.iterations,
                            sampler=_sampler_from_args(args),
                            quantize=not args.no_quantize,
                            compensate=args.compensate, s_star=args.s_star,
                            compensation_rescale=args.rescale,
                            evaluate_final=not args.no_final_eval,
                            track_scc=args.track_scc)


def _mitigate_one(payload) -> tuple:
    path, args = payload
    instance = IsingInstance.load(path)
    schedule = _schedule_from_args(args)
    trace = run_mitigation(instance, schedule, _mitigation_config_from_args(args))
    return path, trace.to_json_dict(), trace.baseline_p_gs, trace.final_p_gs


def cmd_mitigate(args, argv) -> None:
    os.makedirs(args.out, exist_ok=True)
    man = _manifest_for(args, argv)
    payloads = [(path, args) for path in args.instances]
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_mitigate_one, payloads))
    else:
        results = [_mitigate_one(p) for p in payloads]
    summary_rows = []
    for idx, (path, trace_dict, p0, p1) in enumerate(results):
        man.add_input(f"instance_{idx:04d}", path)
        stem = os.path.splitext(os.path.basename(path))[0]
        trace_path = os.path.join(args.out, f"trace_{stem}.json")
        _write_json(trace_path, trace_dict)
        man.add_output(f"trace_{stem}", trace_path, base=args.out)
        summary_rows.append({"instance": os.path.basename(path),
                             "baseline_p_gs": p0, "final_p_gs": p1})
    summary_path = os.path.join(args.out, "summary.json")
    _write_json(summary_path, {"runs": summary_rows})
    man.add_output("summary", summary_path, base=args.out)
    man.save(args.out)


def cmd_metrics(args, argv) -> None:
    os.makedirs(args.out, exist_ok=True)
    man = _manifest_for(args, argv)
    instance = IsingInstance.load(args.instance)
    samples = SampleSet.load(args.samples)
    man.add_input("instance", args.instance)
    man.add_input("samples", args.samples)
    if samples.n != instance.n:
        raise ValidationError("samples and instance disagree on qubit count")
    spectrum = enumerate_spectrum(instance, k_levels=1)
    gs = np.asarray(spectrum.ground_states, dtype=np.int64)
    payload: dict = {
        "n": instance.n,
        "total_draws": samples.total,
        "ground_degeneracy": int(spectrum.degeneracies[0]),
    }
    wanted = args.metric or ["p-gs", "mu", "scc"]
    if "p-gs" in wanted:
        payload["p_gs"] = ground_state_probability(samples, gs)
    if "mu" in wanted:
        payload["mu"] = [float(x) for x in floppiness_fraction(instance, samples)]
    if "scc" in wanted:
        rep = s_cc_metric(samples, gs)
        payload["scc"] = {
            "s_cc": rep.s_cc,
            "n_coupons": rep.n_coupons,
            "observed_coupons": rep.observed_coupons,
            "ground_mass": rep.ground_mass,
            "expected_draws": rep.expected_draws,
            "expected_draws_uniform": rep.expected_draws_uniform,
            "antipodal_merged": rep.antipodal_merged,
            "p_floor": rep.p_floor,
        }
    metrics_path = os.path.join(args.out, "metrics.json")
    _write_json(metrics_path, payload)
    man.add_output("metrics", metrics_path, base=args.out)
    man.save(args.out)


def cmd_compensate(args, argv) -> None:
    os.makedirs(args.out, exist_ok=True)
    man = _manifest_for(args, argv)
    instance = IsingInstance.load(args.instance)
    offsets = OffsetVector.load(args.offsets)
    man.add_input("instance", args.instance)
    man.add_input("offsets", args.offsets)
    schedule = _schedule_from_args(args)
    out_instance = compensate_couplings(instance, schedule, offsets,
                                        s_star=args.s_star, rescale=args.rescale)
    out_path = os.path.join(args.out, "compensated.json")
    out_instance.save(out_path)
    man.add_output("compensated", out_path, base=args.out)
    man.save(args.out)


def cmd_escape(args, argv) -> None:
    os.makedirs(args.out, exist_ok=True)
    man = _manifest_for(args, argv)
    instance = IsingInstance.load(args.instance)
    man.add_input("instance", args.instance)
    offsets = None
    if args.offsets:
        offsets = OffsetVector.load(args.offsets)
        man.add_input("offsets", args.offsets)
    schedule = _schedule_from_args(args)
    taus = np.linspace(0.0, args.tau_max, args.tau_points)
    report = escape_rate_proxy(instance, schedule, args.s_target,
                               offsets=offsets, prepared_state=args.state,
                               taus=taus)
    csv_path = os.path.join(args.out, "escape.csv")
    report.save_csv(csv_path)
    man.add_output("curves", csv_path, base=args.out)
    json_path = os.path.join(args.out, "escape.json")
    _write_json(json_path, report.to_json_dict())
    man.add_output("report", json_path, base=args.out)
    man.save(args.out)


def cmd_schedule(args, argv) -> None:
    os.makedirs(args.out, exist_ok=True)
    man = _manifest_for(args, argv)
    sched = default_schedule(points=args.points, a_max=args.a_max,
                             b_max=args.b_max)
    path = os.path.join(args.out, "schedule.csv")
    sched.save(path)
    man.add_output("schedule", path, base=args.out)
    man.save(args.out)


def cmd_replay(args, argv) -> None:
    man = ExperimentManifest.load(args.manifest)
    if man.command == "replay":
        raise ValidationError("replaying a replay manifest is not supported")
    code = main(man.argv)
    if code != EXIT_OK:
        raise SolverError(f"replayed command exited with {code}")
    problems = verify_outputs(man, base=os.path.dirname(os.path.abspath(args.manifest)))
    if problems:
        for line in problems:
            print(f"mismatch: {line}", file=sys.stderr)
        raise _ReplayMismatch(f"{len(problems)} output(s) differ")
    print(f"replay ok: {len(man.outputs)} output(s) reproduced byte-for-byte")


class _ReplayMismatch(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# parser


def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", default="schrodinger",
                   choices=["schrodinger", "classical-boltzmann", "manifold-uniform"])
    p.add_argument("--shots", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--anneal-time", type=float, default=20.0)
    p.add_argument("--slice-rel-tol", type=float, default=1e-3)
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--level-index", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="offsetqa",
        description="Per-qubit anneal-offset mitigation toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate instances (random pool or fixture)")
    p.add_argument("--out", required=True)
    p.add_argument("--fixture", choices=["pendant-ring"])
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--graph", default="cells", choices=["cells", "ring"])
    p.add_argument("--cells", default="1x2", help="cell grid RxC")
    p.add_argument("--shore", type=int, default=4)
    p.add_argument("--ring-size", type=int, default=16)
    p.add_argument("--chords", type=int, default=2, help="ring chord count")
    p.add_argument("--filter", dest="filter_kind", default="antipodal",
                   choices=["antipodal", "degenerate", "none"])
    p.add_argument("--min-first-excited", type=int, default=50)
    p.add_argument("--min-degeneracy", type=int, default=6)
    p.add_argument("--max-degeneracy", type=int, default=64)
    p.add_argument("--max-candidates", type=int, default=20000)
    p.add_argument("--no-dedup", action="store_true")
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("spectrum", help="low-spectrum scan over anneal fraction")
    p.add_argument("--instance", required=True)
    p.add_argument("--offsets")
    p.add_argument("--schedule")
    p.add_argument("--grid", default="0.3:0.95:27")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--uniform", action="store_true",
                   help="offset-free reduced construction")
    p.add_argument("--dense-cutoff", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_spectrum)

    p = sub.add_parser("anneal", help="sample the end of an anneal")
    p.add_argument("--instance", required=True)
    p.add_argument("--offsets")
    p.add_argument("--schedule")
    _add_sampler_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_anneal)

    p = sub.add_parser("mitigate", help="run the offset mitigation iteration")
    p.add_argument("--instances", nargs="+", required=True)
    p.add_argument("--schedule")
    p.add_argument("--alpha", type=float, default=0.04)
    p.add_argument("--iterations", type=int, default=4)
    _add_sampler_flags(p)
    p.add_argument("--no-quantize", action="store_true")
    p.add_argument("--compensate", action="store_true")
    p.add_argument("--s-star", type=float, default=0.3)
    p.add_argument("--rescale", type=float, default=0.85)
    p.add_argument("--track-scc", action="store_true")
    p.add_argument("--no-final-eval", action="store_true")
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_mitigate)

    p = sub.add_parser("metrics", help="p_GS / floppiness / S_CC of a sample set")
    p.add_argument("--instance", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--metric", action="append",
                   choices=["p-gs", "mu", "scc"],
                   help="repeatable; default is all three")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("compensate", help="reproject couplings around offsets")
    p.add_argument("--instance", required=True)
    p.add_argument("--offsets", required=True)
    p.add_argument("--schedule")
    p.add_argument("--s-star", type=float, default=0.3)
    p.add_argument("--rescale", type=float, default=0.85)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_compensate)

    p = sub.add_parser("escape", help="dwell at fixed s and fit the escape proxy")
    p.add_argument("--instance", required=True)
    p.add_argument("--offsets")
    p.add_argument("--schedule")
    p.add_argument("--s-target", type=float, required=True)
    p.add_argument("--state", type=int)
    p.add_argument("--tau-max", type=float, default=40.0)
    p.add_argument("--tau-points", type=int, default=81)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_escape)

    p = sub.add_parser("schedule", help="emit the synthetic default schedule")
    p.add_argument("--points", type=int, default=1025)
    p.add_argument("--a-max", type=float, default=8.0)
    p.add_argument("--b-max", type=float, default=12.0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_schedule)

    p = sub.add_parser("replay", help="re-run a manifest and verify output hashes")
    p.add_argument("manifest")
    p.set_defaults(handler=cmd_replay)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.handler(args, argv)
    except _ReplayMismatch as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_REPLAY_MISMATCH
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
