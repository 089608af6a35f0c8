"""Random-instance pools and the batch studies built on them.

Pools draw +-1-coupling instances on small cell-graph topologies, keep the
ones whose low spectrum matches a study's needs, and deduplicate up to
gauge and cell symmetry. Study helpers wire pools into the mitigation,
spectrum, and escape machinery with deterministic per-instance seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .dynamics import SamplerConfig, escape_rate_proxy, sample
from .errors import ValidationError
from .fixtures import floppy_valley_gadget
from .ising import (IsingInstance, chimera_automorphisms, chimera_cell_grid,
                    canonical_signature, dihedral_automorphisms,
                    enumerate_spectrum, floppiness_fraction,
                    ground_state_probability, manifold_floppiness,
                    random_pm_j_instance, ring_chord_graph, testbed_filter)
from .mitigation import single_offset_step
from .schedule import AnnealSchedule, OffsetVector, default_schedule
from .spectra import DiagonalBasisCache, gap_scan, minimize_gap

# keeps per-instance seed streams clear of mitigation's per-round stride
INSTANCE_SEED_STRIDE = 1_000_003

DEFAULT_GAP_GRID = np.linspace(0.30, 0.95, 27)
GADGET_GAP_GRID = np.linspace(0.45, 0.90, 31)


@dataclass(frozen=True)
class PoolStats:
    candidates: int
    accepted: int
    duplicates: int
    rejections: dict
    ground_degeneracy_hist: dict


@dataclass(frozen=True)
class InstancePool:
    kind: str
    instances: tuple
    stats: PoolStats


def _pool(kind: str, count: int, seed: int, draw_fn, autos, family: str,
          accept_fn, max_candidates: int, dedup: bool) -> InstancePool:
    if count < 1:
        raise ValidationError("pool size must be positive")
    rng = np.random.default_rng(seed)
    accepted = []
    seen = set()
    rejections: dict = {}
    hist: dict = {}
    duplicates = 0
    candidates = 0
    while len(accepted) < count and candidates < max_candidates:
        candidates += 1
        inst = draw_fn(rng)
        spectrum = enumerate_spectrum(inst, k_levels=2)
        hist[spectrum.degeneracies[0]] = hist.get(spectrum.degeneracies[0], 0) + 1
        ok, reason = accept_fn(spectrum)
        if not ok:
            rejections[reason] = rejections.get(reason, 0) + 1
            continue
        if dedup:
            sig = canonical_signature(inst, autos)
            if sig in seen:
                duplicates += 1
                continue
            seen.add(sig)
        inst = inst.with_metadata({"family": family,
                                   "pool_kind": kind,
                                   "pool_seed": seed,
                                   "candidate_index": candidates - 1})
        accepted.append(inst)
    if len(accepted) < count:
        raise ValidationError(
            f"only {len(accepted)}/{count} instances accepted after {candidates} candidates")
    stats = PoolStats(candidates=candidates, accepted=len(accepted),
                      duplicates=duplicates, rejections=rejections,
                      ground_degeneracy_hist=dict(sorted(hist.items())))
    return InstancePool(kind=kind, instances=tuple(accepted), stats=stats)


def _cell_draw(rows: int, cols: int, shore: int, dedup: bool):
    n, edges = chimera_cell_grid(rows, cols, shore)
    autos = chimera_automorphisms(rows, cols, shore) if dedup else [np.arange(n)]

    def draw(rng):
        return random_pm_j_instance(n, edges, rng)

    return draw, autos, f"chimera-{rows}x{cols}-k{shore}"


def _antipodal_accept(min_first_excited: int):
    def accept(spectrum):
        res = testbed_filter(spectrum, min_first_excited=min_first_excited)
        return res.accepted, res.reason

    return accept


def antipodal_pool(count: int, seed: int, rows: int = 1, cols: int = 2,
                   shore: int = 4, min_first_excited: int = 50,
                   max_candidates: int = 20000, dedup: bool = True) -> InstancePool:
    """Cell-graph instances with exactly two (antipodal) ground states and a
    large first excited level, the shape that hosts clean perturbative
    crossings. At 16 qubits the level-size cut is only satisfiable on ring
    graphs; see antipodal_ring_pool."""
    draw, autos, family = _cell_draw(rows, cols, shore, dedup)
    return _pool("antipodal", count, seed, draw, autos, family,
                 _antipodal_accept(min_first_excited), max_candidates, dedup)


def antipodal_ring_pool(count: int, seed: int, n: int = 16, n_chords: int = 2,
                        min_first_excited: int = 50,
                        max_candidates: int = 20000,
                        dedup: bool = True) -> InstancePool:
    """Antipodal-pair instances on random chorded rings.

    Wall pairs diffusing along ring arcs give first excited levels in the
    hundreds at 16 qubits, so the acceptance cut that is unreachable on
    dense cell graphs passes at a usable rate here. Graphs are redrawn per
    candidate; dedup quotients by gauge and the dihedral relabelings.
    """
    autos = dihedral_automorphisms(n) if dedup else [np.arange(n)]

    def draw(rng):
        _, edges = ring_chord_graph(n, n_chords, rng)
        return random_pm_j_instance(n, edges, rng)

    return _pool("antipodal", count, seed, draw, autos, f"ring-{n}c{n_chords}",
                 _antipodal_accept(min_first_excited), max_candidates, dedup)


def raw_pool(count: int, seed: int, rows: int = 1, cols: int = 2,
             shore: int = 4, max_candidates: int = 20000,
             dedup: bool = True) -> InstancePool:
    """Unfiltered random instances (still deduplicated unless disabled)."""

    def accept(spectrum):
        return True, "accepted"

    draw, autos, family = _cell_draw(rows, cols, shore, dedup)
    return _pool("raw", count, seed, draw, autos, family, accept,
                 max_candidates, dedup)


def degenerate_pool(count: int, seed: int, rows: int = 1, cols: int = 2,
                    shore: int = 4, min_degeneracy: int = 6,
                    max_degeneracy: int = 64, max_candidates: int = 20000,
                    dedup: bool = True) -> InstancePool:
    """Instances with a moderately degenerate ground level, for sampling-
    uniformity studies."""

    def accept(spectrum):
        g = spectrum.degeneracies[0]
        if g < min_degeneracy:
            return False, "ground-degeneracy-low"
        if g > max_degeneracy:
            return False, "ground-degeneracy-high"
        return True, "accepted"

    draw, autos, family = _cell_draw(rows, cols, shore, dedup)
    return _pool("degenerate", count, seed, draw, autos, family, accept,
                 max_candidates, dedup)


@dataclass(frozen=True)
class BaselineRun:
    """One zero-offset sampling round used for ranking and reuse."""

    instance: IsingInstance
    index: int
    seed: int
    p_gs: float
    mu: np.ndarray
    ground_states: tuple


def baseline_runs(instances: Sequence[IsingInstance], schedule: AnnealSchedule,
                  sampler: SamplerConfig) -> list:
    """Sample every instance at delta = 0 with per-instance derived seeds."""
    out = []
    for idx, inst in enumerate(instances):
        spectrum = enumerate_spectrum(inst, k_levels=1)
        gs = spectrum.ground_states
        cfg = sampler.with_seed(sampler.seed + INSTANCE_SEED_STRIDE * idx)
        samples = sample(inst, schedule, None, cfg)
        out.append(BaselineRun(instance=inst, index=idx, seed=cfg.seed,
                               p_gs=ground_state_probability(samples, gs),
                               mu=floppiness_fraction(inst, samples),
                               ground_states=gs))
    return out


def hardest_first(runs: Sequence[BaselineRun]) -> list:
    """Sort baseline runs by ascending p_GS, pool order breaking ties."""
    return sorted(runs, key=lambda r: (r.p_gs, r.index))


def exact_manifold_floppiness(instance: IsingInstance, level_index: int = 1) -> np.ndarray:
    """Per-qubit floppiness fractions over an exact enumerated level."""
    spectrum = enumerate_spectrum(instance, k_levels=level_index + 1)
    states = np.asarray(spectrum.states[level_index], dtype=np.int64)
    return manifold_floppiness(states, instance.n)


def gadget_gap_vs_alpha(alphas: Sequence[float],
                        schedule: Optional[AnnealSchedule] = None,
                        s_grid: Optional[np.ndarray] = None,
                        sampler: Optional[SamplerConfig] = None,
                        quantize: bool = True) -> list:
    """Min third gap of the pendant-ring gadget under single-step offsets.

    mu comes from one manifold-uniform sampling round over the false
    valley (it is exact there: every pendant floppy, nothing else), then
    each alpha gets offsets alpha*mu and a warm-started gap scan. Returns
    one row per alpha with the refined minimum and its location.
    """
    gadget = floppy_valley_gadget()
    if schedule is None:
        schedule = default_schedule()
    if s_grid is None:
        s_grid = GADGET_GAP_GRID
    if sampler is None:
        sampler = SamplerConfig(backend="manifold-uniform", shots=4096, seed=11)
    samples = sample(gadget, schedule, None, sampler)
    mu = floppiness_fraction(gadget, samples)
    cache = DiagonalBasisCache(gadget)
    rows = []
    for alpha in alphas:
        delta = single_offset_step(mu, alpha, quantize=quantize)
        report = gap_scan(gadget, schedule, s_grid, offsets=delta, k=4, cache=cache)
        found = minimize_gap(report.s_grid, report.third_gaps())
        rows.append({"alpha": float(alpha),
                     "min_third_gap": found.gap,
                     "s_at_min": found.s_target,
                     "offsets": [float(x) for x in delta.delta]})
    return rows


@dataclass(frozen=True)
class VariantGap:
    name: str
    offsets: Optional[OffsetVector]
    min_third_gap: float
    s_at_min: float


def variant_gap_table(instance: IsingInstance, schedule: AnnealSchedule,
                      variants: dict, s_grid: Optional[np.ndarray] = None,
                      k: int = 4) -> list:
    """Refined min third gap for each named offset vector (None = baseline)."""
    if s_grid is None:
        s_grid = DEFAULT_GAP_GRID
    cache = DiagonalBasisCache(instance)
    out = []
    for name, offsets in variants.items():
        report = gap_scan(instance, schedule, s_grid, offsets=offsets, k=k,
                          cache=cache)
        found = minimize_gap(report.s_grid, report.third_gaps())
        out.append(VariantGap(name=name, offsets=offsets,
                              min_third_gap=found.gap, s_at_min=found.s_target))
    return out


def escape_rate_comparison(instance: IsingInstance, schedule: AnnealSchedule,
                           variants: dict, tau_points: int = 81,
                           tau_max_cap: float = 2000.0,
                           config: Optional[SamplerConfig] = None,
                           s_grid: Optional[np.ndarray] = None) -> dict:
    """Escape-rate proxy per variant, each at its own avoided crossing.

    For every named offset vector the instance's min third gap locates the
    dwell point s* and sets the dwell span (a half period of the crossing,
    capped). Returns {name: EscapeRateReport}; compare gamma across names.
    """
    gaps = variant_gap_table(instance, schedule, variants, s_grid=s_grid)
    reports = {}
    cache = DiagonalBasisCache(instance)
    for row in gaps:
        gap = max(row.min_third_gap, 1e-9)
        tau_max = min(np.pi / gap, tau_max_cap)
        taus = np.linspace(0.0, tau_max, tau_points)
        reports[row.name] = escape_rate_proxy(
            instance, schedule, row.s_at_min, offsets=row.offsets,
            taus=taus, config=config, cache=cache)
    return reports
