"""Iterative floppiness-driven offset mitigation and its diagnostics.

Each iteration samples the anneal at the current offsets, measures the
per-qubit floppiness fractions mu_i of the drawn states, and damps the
offsets toward alpha * mu. Positive alpha advances persistently floppy
qubits (mitigation); negative alpha retards them (antimitigation).

Floppiness and ground-state accounting are always judged against the
original problem Hamiltonian, even when sampling runs on an
orthogonal-compensated variant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import SolverError, ValidationError
from .dynamics import SamplerConfig, sample
from .ising import (IsingInstance, SampleSet, enumerate_spectrum,
                    floppiness_fraction, ground_state_probability, s_cc_metric)
from .schedule import (DEFAULT_GRANULARITY, DEFAULT_OFFSET_BOUND,
                       DEFAULT_RESCALE, DEFAULT_S_STAR, AnnealSchedule,
                       OffsetVector, compensate_couplings)
from .spectra import DiagonalBasisCache, gap_scan, minimize_gap

TRACE_FORMAT = "offsetqa-mitigation-trace"
TRACE_VERSION = 1
SEED_STRIDE = 7919  # prime stride keeps per-iteration streams disjoint


@dataclass(frozen=True)
class MitigationConfig:
    """Knobs for one mitigation run.

    alpha is the signed offset magnitude; draws per iteration and the
    backend live in sampler. When compensate is set, every iteration's
    sampling Hamiltonian has its couplings reprojected around the current
    offsets at s_star (and rescaled), while metrics stay on the original.
    """

    alpha: float = 0.04
    n_iterations: int = 4
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    quantize: bool = True
    offset_bound: float = DEFAULT_OFFSET_BOUND
    granularity: float = DEFAULT_GRANULARITY
    compensate: bool = False
    s_star: float = DEFAULT_S_STAR
    compensation_rescale: float = DEFAULT_RESCALE
    evaluate_final: bool = True
    track_scc: bool = False
    track_gaps: bool = False
    gap_grid: tuple = ()

    def __post_init__(self):
        if not np.isfinite(self.alpha):
            raise ValidationError("alpha must be finite")
        if abs(self.alpha) > self.offset_bound + 1e-12:
            raise ValidationError(
                f"|alpha| = {abs(self.alpha)} exceeds the offset bound {self.offset_bound}")
        if self.n_iterations < 1:
            raise ValidationError("need at least one iteration")
        if self.track_gaps and len(self.gap_grid) < 3:
            raise ValidationError("gap tracking needs a scan grid of at least 3 points")

    def to_json_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "alpha", "n_iterations", "quantize", "offset_bound", "granularity",
            "compensate", "s_star", "compensation_rescale", "evaluate_final",
            "track_scc", "track_gaps")}
        d["gap_grid"] = [float(x) for x in self.gap_grid]
        d["sampler"] = {k: getattr(self.sampler, k) for k in (
            "backend", "shots", "seed", "anneal_time", "slice_rel_tol",
            "krylov_tol", "krylov_m_max", "norm_tol", "temperature", "level_index")}
        return d


def update_offsets(delta_prev: OffsetVector, mu: np.ndarray, alpha: float,
                   k: int, quantize: bool = True) -> OffsetVector:
    """One damped step toward alpha*mu, then clamp and optionally quantize.

    The damping weight 1/(1 + sqrt(k)) shrinks with the iteration index,
    so for stationary mu the offsets contract monotonically onto
    alpha * mu. Bound and granularity carry over from delta_prev.
    """
    if k < 1:
        raise ValidationError("iteration index starts at 1")
    mu = np.asarray(mu, dtype=float)
    if mu.shape != delta_prev.delta.shape:
        raise ValidationError("mu length disagrees with offsets")
    if not np.all(np.isfinite(mu)):
        raise ValidationError("mu must be finite")
    step = (alpha * mu - delta_prev.delta) / (1.0 + np.sqrt(float(k)))
    raw = OffsetVector(delta_prev.delta + step, bound=delta_prev.bound,
                       granularity=delta_prev.granularity).clamped()
    return raw.quantized() if quantize else raw


def single_offset_step(mu: np.ndarray, alpha: float,
                       bound: float = DEFAULT_OFFSET_BOUND,
                       granularity: float = DEFAULT_GRANULARITY,
                       quantize: bool = True) -> OffsetVector:
    """Direct offsets delta_i = alpha * mu_i for single-shot gap studies."""
    mu = np.asarray(mu, dtype=float)
    raw = OffsetVector(np.clip(alpha * mu, -bound, bound), bound=bound,
                       granularity=granularity)
    return raw.quantized() if quantize else raw


def p_gs(samples: SampleSet, ground_states: Sequence[int]) -> float:
    """Fraction of draws that landed in the exact ground set."""
    if samples.total == 0:
        raise ValidationError("empty sample set")
    return ground_state_probability(samples, ground_states)


@dataclass(frozen=True)
class IterationRecord:
    """What one sampling round saw and the offsets it produced.

    mu and p_gs describe sampling at offsets_before; offsets_after is the
    update computed from that round (for the final evaluation record the
    two are identical and no update happened).
    """

    k: int
    seed: int
    offsets_before: np.ndarray
    mu: np.ndarray
    p_gs: float
    offsets_after: np.ndarray
    total_draws: int
    unique_states: int
    compensated: bool
    scc: Optional[float] = None
    min_third_gap: Optional[float] = None

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "offsets_before": [float(x) for x in self.offsets_before],
            "mu": [float(x) for x in self.mu],
            "p_gs": self.p_gs,
            "offsets_after": [float(x) for x in self.offsets_after],
            "total_draws": self.total_draws,
            "unique_states": self.unique_states,
            "compensated": self.compensated,
            "scc": self.scc,
            "min_third_gap": self.min_third_gap,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "IterationRecord":
        return cls(k=int(d["k"]), seed=int(d["seed"]),
                   offsets_before=np.asarray(d["offsets_before"], dtype=float),
                   mu=np.asarray(d["mu"], dtype=float),
                   p_gs=float(d["p_gs"]),
                   offsets_after=np.asarray(d["offsets_after"], dtype=float),
                   total_draws=int(d["total_draws"]),
                   unique_states=int(d["unique_states"]),
                   compensated=bool(d["compensated"]),
                   scc=None if d.get("scc") is None else float(d["scc"]),
                   min_third_gap=(None if d.get("min_third_gap") is None
                                  else float(d["min_third_gap"])))


@dataclass(frozen=True)
class MitigationTrace:
    """Full record of a mitigation run, sufficient to reproduce it."""

    n: int
    config: dict
    iterations: tuple
    final_offsets: OffsetVector
    final_record: Optional[IterationRecord] = None
    aborted: bool = False

    @property
    def baseline_p_gs(self) -> float:
        return self.iterations[0].p_gs

    @property
    def final_p_gs(self) -> float:
        rec = self.final_record if self.final_record is not None else self.iterations[-1]
        return rec.p_gs

    def to_json_dict(self) -> dict:
        return {
            "format": TRACE_FORMAT,
            "version": TRACE_VERSION,
            "n": self.n,
            "config": self.config,
            "iterations": [r.to_json_dict() for r in self.iterations],
            "final_offsets": [float(x) for x in self.final_offsets.delta],
            "offset_bound": self.final_offsets.bound,
            "granularity": self.final_offsets.granularity,
            "final_record": (None if self.final_record is None
                             else self.final_record.to_json_dict()),
            "aborted": self.aborted,
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_json_dict(cls, d: dict) -> "MitigationTrace":
        if d.get("format") != TRACE_FORMAT:
            raise ValidationError(f"not a {TRACE_FORMAT} document")
        if int(d.get("version", -1)) != TRACE_VERSION:
            raise ValidationError(f"unsupported trace version {d.get('version')}")
        return cls(
            n=int(d["n"]),
            config=d["config"],
            iterations=tuple(IterationRecord.from_json_dict(r) for r in d["iterations"]),
            final_offsets=OffsetVector(np.asarray(d["final_offsets"], dtype=float),
                                       bound=float(d["offset_bound"]),
                                       granularity=float(d["granularity"])),
            final_record=(None if d.get("final_record") is None
                          else IterationRecord.from_json_dict(d["final_record"])),
            aborted=bool(d.get("aborted", False)),
        )

    @classmethod
    def load(cls, path) -> "MitigationTrace":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


class MitigationAborted(SolverError):
    """Sampler failure mid-run; .trace holds everything up to the failure."""

    def __init__(self, message: str, trace: MitigationTrace):
        super().__init__(message)
        self.trace = trace


def _sampling_round(instance: IsingInstance, schedule: AnnealSchedule,
                    offsets: OffsetVector, config: MitigationConfig,
                    seed: int, ground_states, cache) -> tuple:
    """Sample at the given offsets and measure mu / p_GS / extras."""
    if config.compensate:
        run_instance = compensate_couplings(instance, schedule, offsets,
                                            s_star=config.s_star,
                                            rescale=config.compensation_rescale)
    else:
        run_instance = instance
    samples = sample(run_instance, schedule, offsets,
                     config.sampler.with_seed(seed), cache=cache)
    mu = floppiness_fraction(instance, samples)
    p = p_gs(samples, ground_states)
    scc = None
    if config.track_scc:
        scc = s_cc_metric(samples, ground_states).s_cc
    gap = None
    if config.track_gaps:
        report = gap_scan(run_instance, schedule, np.asarray(config.gap_grid),
                          offsets=offsets, k=4)
        gap = minimize_gap(report.s_grid, report.third_gaps()).gap
    return samples, mu, p, scc, gap


def run_mitigation(instance: IsingInstance, schedule: AnnealSchedule,
                   config: Optional[MitigationConfig] = None,
                   ground_states: Optional[Sequence[int]] = None) -> MitigationTrace:
    """Run the damped offset iteration and record everything.

    Iteration k samples at the offsets left by iteration k-1 (so the first
    record is the delta = 0 baseline) and then updates. When
    evaluate_final is set, one extra sampling round measures the final
    offsets without updating them. Per-round seeds are sampler.seed plus
    SEED_STRIDE times the round index, recorded in the trace.
    """
    if config is None:
        config = MitigationConfig()
    if ground_states is None:
        ground_states = enumerate_spectrum(instance, k_levels=1).ground_states
    ground_states = tuple(int(g) for g in ground_states)
    cache = DiagonalBasisCache(instance)
    delta = OffsetVector(np.zeros(instance.n), bound=config.offset_bound,
                         granularity=config.granularity)
    records = []

    def partial() -> MitigationTrace:
        return MitigationTrace(n=instance.n, config=config.to_json_dict(),
                               iterations=tuple(records), final_offsets=delta,
                               aborted=True)

    for k in range(1, config.n_iterations + 1):
        seed = config.sampler.seed + SEED_STRIDE * k
        try:
            samples, mu, p, scc, gap = _sampling_round(
                instance, schedule, delta, config, seed, ground_states, cache)
        except SolverError as err:
            raise MitigationAborted(f"iteration {k} failed: {err}", partial()) from err
        new_delta = update_offsets(delta, mu, config.alpha, k,
                                   quantize=config.quantize)
        records.append(IterationRecord(
            k=k, seed=seed, offsets_before=delta.delta.copy(), mu=mu,
            p_gs=p, offsets_after=new_delta.delta.copy(),
            total_draws=samples.total, unique_states=len(samples.states),
            compensated=config.compensate, scc=scc, min_third_gap=gap))
        delta = new_delta

    final_record = None
    if config.evaluate_final:
        seed = config.sampler.seed + SEED_STRIDE * (config.n_iterations + 1)
        try:
            samples, mu, p, scc, gap = _sampling_round(
                instance, schedule, delta, config, seed, ground_states, cache)
        except SolverError as err:
            raise MitigationAborted(f"final evaluation failed: {err}", partial()) from err
        final_record = IterationRecord(
            k=config.n_iterations + 1, seed=seed,
            offsets_before=delta.delta.copy(), mu=mu, p_gs=p,
            offsets_after=delta.delta.copy(), total_draws=samples.total,
            unique_states=len(samples.states), compensated=config.compensate,
            scc=scc, min_third_gap=gap)

    return MitigationTrace(n=instance.n, config=config.to_json_dict(),
                           iterations=tuple(records), final_offsets=delta,
                           final_record=final_record)


def antimitigation_run(instance: IsingInstance, schedule: AnnealSchedule,
                       config: Optional[MitigationConfig] = None,
                       ground_states: Optional[Sequence[int]] = None) -> MitigationTrace:
    """run_mitigation with the sign of alpha forced negative."""
    if config is None:
        config = MitigationConfig()
    if config.alpha > 0:
        config = replace(config, alpha=-config.alpha)
    return run_mitigation(instance, schedule, config, ground_states=ground_states)
