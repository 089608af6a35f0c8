"""Closed-system anneal dynamics, samplers, and an escape-rate proxy.

The propagator is a Lanczos (Krylov) approximation of exp(-i dt H) applied
slice by slice, with the Hamiltonian held at each slice midpoint. State
vectors live on the packed-integer basis used everywhere else, so sampled
bitstrings feed straight into SampleSet without relabeling.

Everything here is unitary: there is no bath, so the "escape rate" extracted
by escape_rate_proxy is a closed-system proxy for the open-system relaxation
it stands in for, useful only to compare variants of the same instance.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import SolverError, ValidationError
from .ising import IsingInstance, SampleSet, enumerate_spectrum
from .schedule import AnnealSchedule, OffsetVector
from .spectra import DiagonalBasisCache, HamiltonianOperator

DYN_N_SOFT_MAX = 20
DYN_N_HARD_MAX = 24
SAMPLER_BACKENDS = ("schrodinger", "classical-boltzmann", "manifold-uniform")

DEFAULT_ANNEAL_TIME = 20.0
DEFAULT_SHOTS = 10_000


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling and integration knobs shared by every pipeline stage.

    slice_rel_tol bounds the relative change of either envelope across one
    time slice; 1e-3 is the validated default, heavy batch studies use 4e-3.
    """

    backend: str = "schrodinger"
    shots: int = DEFAULT_SHOTS
    seed: int = 0
    anneal_time: float = DEFAULT_ANNEAL_TIME
    slice_rel_tol: float = 1e-3
    max_step: float = 0.5
    krylov_tol: float = 1e-11
    krylov_m_max: int = 64
    norm_tol: float = 1e-8
    temperature: float = 0.0
    level_index: int = 1

    def __post_init__(self):
        if self.backend not in SAMPLER_BACKENDS:
            raise ValidationError(
                f"unknown backend {self.backend!r}; expected one of {SAMPLER_BACKENDS}")
        if self.shots < 1:
            raise ValidationError("shots must be positive")
        if not (self.anneal_time > 0 and np.isfinite(self.anneal_time)):
            raise ValidationError("anneal_time must be positive and finite")
        if not (0 < self.slice_rel_tol <= 0.1):
            raise ValidationError("slice_rel_tol must lie in (0, 0.1]")
        if self.max_step <= 0:
            raise ValidationError("max_step must be positive")
        if not (0 < self.krylov_tol < 1e-3):
            raise ValidationError("krylov_tol must lie in (0, 1e-3)")
        if self.krylov_m_max < 4:
            raise ValidationError("krylov_m_max must be at least 4")
        if self.temperature < 0:
            raise ValidationError("temperature must be nonnegative")
        if self.level_index < 0:
            raise ValidationError("level_index must be nonnegative")

    def with_seed(self, seed: int) -> "SamplerConfig":
        return replace(self, seed=int(seed))


def _check_size(n: int) -> None:
    if n > DYN_N_HARD_MAX:
        raise ValidationError(f"statevector dynamics limited to n <= {DYN_N_HARD_MAX}, got {n}")
    if n > DYN_N_SOFT_MAX:
        warnings.warn(f"n = {n} statevector evolution will be slow and memory-hungry",
                      RuntimeWarning, stacklevel=3)


def _expm_tridiag_e1(alphas: Sequence[float], betas: Sequence[float],
                     tau: float) -> np.ndarray:
    """exp(-i tau T) e1 for the real symmetric tridiagonal T."""
    lam, q = eigh_tridiagonal(np.asarray(alphas, dtype=float),
                              np.asarray(betas, dtype=float))
    return q @ (np.exp(-1j * tau * lam) * q[0, :])


@dataclass
class KrylovStats:
    matvecs: int = 0
    max_dim: int = 0
    splits: int = 0

    def merge(self, other: "KrylovStats") -> None:
        self.matvecs += other.matvecs
        self.max_dim = max(self.max_dim, other.max_dim)
        self.splits += other.splits


def krylov_propagate(matvec, psi: np.ndarray, tau: float,
                     tol: float = 1e-11, m_max: int = 40,
                     stats: Optional[KrylovStats] = None,
                     _depth: int = 0) -> np.ndarray:
    """Apply exp(-i tau H) to psi for Hermitian H given only matvec.

    Plain Lanczos three-term recurrence. Orthogonality of the basis is NOT
    maintained beyond the recurrence: for matrix-function actions the loss
    only duplicates converged Ritz values and leaves the computed
    exp(T) e1 combination intact, so the classic serial codes skip
    reorthogonalization too. A full DGKS sweep runs only when beta has
    collapsed, to tell a genuinely invariant subspace (happy breakdown)
    from mere cancellation. The stopping estimate is the standard defect
    bound |tau| * beta_{m+1} * |last subspace coefficient|; if m_max is
    reached without meeting tol the interval is halved recursively.
    """
    if stats is None:
        stats = KrylovStats()
    if tau == 0.0:
        return psi.astype(complex, copy=True)
    if _depth > 40:
        raise SolverError("krylov step size underflow; H norm too large for tolerance")
    nrm = float(np.linalg.norm(psi))
    if nrm == 0.0:
        return psi.astype(complex, copy=True)
    dim = psi.shape[0]
    m_cap = min(m_max, dim)
    basis = np.empty((m_cap + 1, dim), dtype=complex)
    basis[0] = psi / nrm
    alphas: list[float] = []
    betas: list[float] = []
    sub = None
    for j in range(m_cap):
        w = matvec(basis[j])
        stats.matvecs += 1
        pre_norm = float(np.linalg.norm(w))
        alpha = float(np.real(np.vdot(basis[j], w)))
        w = w - alpha * basis[j]
        if j > 0:
            w -= betas[-1] * basis[j - 1]
        beta = float(np.linalg.norm(w))
        if beta < 1e-8 * max(pre_norm, 1e-300):
            # near-total cancellation: confirm an invariant subspace rather
            # than mistaking lost orthogonality for a happy breakdown
            overlap = basis[: j + 1].conj() @ w
            w -= basis[: j + 1].T @ overlap
            beta = float(np.linalg.norm(w))
        alphas.append(alpha)
        betas.append(beta)
        sub = _expm_tridiag_e1(alphas, betas[:-1], tau)
        stats.max_dim = max(stats.max_dim, j + 1)
        if beta <= 1e-14 * max(abs(alpha), 1.0):
            # happy breakdown: the Krylov space is invariant
            return nrm * (basis[: j + 1].T @ sub)
        defect = abs(tau) * beta * abs(sub[-1])
        if j >= 2 and defect <= tol:
            return nrm * (basis[: j + 1].T @ sub)
        basis[j + 1] = w / beta
    stats.splits += 1
    half = krylov_propagate(matvec, psi, 0.5 * tau, tol=tol, m_max=m_max,
                            stats=stats, _depth=_depth + 1)
    return krylov_propagate(matvec, half, 0.5 * tau, tol=tol, m_max=m_max,
                            stats=stats, _depth=_depth + 1)


def slice_count(schedule: AnnealSchedule, rel_tol: float,
                probe_points: int = 2049) -> int:
    """Number of equal time slices keeping per-slice envelope drift below rel_tol."""
    s_probe = np.linspace(0.0, 1.0, probe_points)
    c_probe = schedule.c_of_s(s_probe)
    a_probe = schedule.a_of_c(c_probe)
    b_probe = schedule.b_of_c(c_probe)
    da = np.max(np.abs(np.diff(a_probe))) * (probe_points - 1) / schedule.a_max
    db = np.max(np.abs(np.diff(b_probe))) * (probe_points - 1) / schedule.b_max
    return max(8, int(math.ceil(max(da, db) / rel_tol)))


@dataclass(frozen=True)
class EvolutionResult:
    """Final statevector of one anneal plus integration diagnostics."""

    final_state: np.ndarray
    anneal_time: float
    n_slices: int
    norm_deviation: float
    matvecs: int
    max_krylov_dim: int
    splits: int

    @property
    def n(self) -> int:
        return int(self.final_state.shape[0]).bit_length() - 1

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.final_state) ** 2
        return p / p.sum()

    def ground_probability(self, ground_states: Sequence[int]) -> float:
        p = self.probabilities()
        return float(p[np.asarray(list(ground_states), dtype=np.int64)].sum())


def evolve_anneal(instance: IsingInstance, schedule: AnnealSchedule,
                  offsets: Optional[OffsetVector] = None,
                  config: Optional[SamplerConfig] = None,
                  cache: Optional[DiagonalBasisCache] = None) -> EvolutionResult:
    """Integrate one full anneal from the uniform superposition.

    Piecewise-constant midpoint Hamiltonian per slice; the slice count is
    set by the schedule's envelope slew rate and config.slice_rel_tol, and
    never lets one slice span more than config.max_step time units (long
    anneals must keep resolving narrow avoided crossings in s).
    """
    if config is None:
        config = SamplerConfig()
    _check_size(instance.n)
    if cache is None:
        cache = DiagonalBasisCache(instance)
    n_slices = max(slice_count(schedule, config.slice_rel_tol),
                   int(math.ceil(config.anneal_time / config.max_step)))
    dt = config.anneal_time / n_slices
    dim = 1 << instance.n
    psi = np.full(dim, 1.0 / math.sqrt(dim), dtype=complex)
    stats = KrylovStats()
    for j in range(n_slices):
        s_mid = (j + 0.5) / n_slices
        op = HamiltonianOperator.at_fraction(instance, schedule, s_mid,
                                             offsets=offsets, cache=cache)
        psi = krylov_propagate(op.matvec, psi, dt, tol=config.krylov_tol,
                               m_max=config.krylov_m_max, stats=stats)
    deviation = abs(float(np.linalg.norm(psi)) - 1.0)
    if deviation > config.norm_tol:
        raise SolverError(f"norm drift {deviation:.3e} exceeds {config.norm_tol:.3e}")
    return EvolutionResult(final_state=psi, anneal_time=config.anneal_time,
                           n_slices=n_slices, norm_deviation=deviation,
                           matvecs=stats.matvecs, max_krylov_dim=stats.max_dim,
                           splits=stats.splits)


def _draws_to_sampleset(states: np.ndarray, counts: np.ndarray, n: int,
                        sampler: str, seed: int, metadata: dict) -> SampleSet:
    keep = counts > 0
    return SampleSet.from_draws(np.repeat(states[keep], counts[keep]), n,
                                sampler=sampler, seed=seed, metadata=metadata)


def sample(instance: IsingInstance, schedule: AnnealSchedule,
           offsets: Optional[OffsetVector] = None,
           config: Optional[SamplerConfig] = None,
           cache: Optional[DiagonalBasisCache] = None) -> SampleSet:
    """Draw config.shots states from the configured backend.

    schrodinger runs one statevector anneal and then draws a multinomial
    from the final distribution, so merged sample sets from shared seeds
    are exactly reproducible. classical-boltzmann and manifold-uniform
    ignore the schedule and offsets; they exist as idealized references.
    """
    if config is None:
        config = SamplerConfig()
    rng = np.random.default_rng(config.seed)
    dim = 1 << instance.n
    if config.backend == "schrodinger":
        result = evolve_anneal(instance, schedule, offsets=offsets,
                               config=config, cache=cache)
        probs = result.probabilities()
        counts = rng.multinomial(config.shots, probs)
        meta = {"anneal_time": config.anneal_time,
                "n_slices": result.n_slices,
                "norm_deviation": result.norm_deviation}
        return _draws_to_sampleset(np.arange(dim, dtype=np.int64), counts,
                                   instance.n, "schrodinger", config.seed, meta)
    if config.backend == "classical-boltzmann":
        if instance.n > DYN_N_HARD_MAX:
            raise ValidationError("boltzmann backend needs full enumeration")
        energies = instance.energies(np.arange(dim, dtype=np.int64))
        e_min = float(energies.min())
        if config.temperature == 0.0:
            probs = (energies <= e_min + 1e-9).astype(float)
        else:
            probs = np.exp(-(energies - e_min) / config.temperature)
        probs = probs / probs.sum()
        counts = rng.multinomial(config.shots, probs)
        meta = {"temperature": config.temperature}
        return _draws_to_sampleset(np.arange(dim, dtype=np.int64), counts,
                                   instance.n, "classical-boltzmann", config.seed, meta)
    # manifold-uniform
    spectrum = enumerate_spectrum(instance, k_levels=config.level_index + 1)
    states = np.asarray(spectrum.states[config.level_index], dtype=np.int64)
    if len(states) == 0:
        raise ValidationError("requested level has no materialized states")
    probs = np.full(len(states), 1.0 / len(states))
    counts = rng.multinomial(config.shots, probs)
    meta = {"level_index": config.level_index,
            "level_energy": float(spectrum.energies[config.level_index])}
    return _draws_to_sampleset(states, counts, instance.n,
                               "manifold-uniform", config.seed, meta)


@dataclass(frozen=True)
class EscapeRateReport:
    """Dwell curves at fixed s plus the fitted short-time transfer rate.

    gamma is fit on the ground-manifold transfer probability, which rises
    quadratically at short times with a coefficient set by the avoided
    crossing; gamma_level and gamma_state are the analogous fits on loss
    of level population and of the prepared state itself. All of this is
    unitary dynamics: a closed-system proxy, comparable only across
    variants of the same instance on the same dwell grid.
    """

    s_target: float
    prepared_state: int
    taus: np.ndarray
    ground_prob: np.ndarray
    level_survival: np.ndarray
    state_survival: np.ndarray
    gamma: float
    gamma_level: float
    gamma_state: float
    fit_points: int
    fit_rms: float
    caveat: str = "closed-system proxy"

    def save_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("# offsetqa-escape v1 "
                    f"s_target={self.s_target!r} prepared={self.prepared_state} "
                    f"gamma={self.gamma!r}\n")
            f.write("tau,ground_prob,level_survival,state_survival\n")
            for row in zip(self.taus, self.ground_prob, self.level_survival,
                           self.state_survival):
                f.write(",".join(repr(float(x)) for x in row) + "\n")

    def to_json_dict(self) -> dict:
        return {
            "s_target": self.s_target,
            "prepared_state": self.prepared_state,
            "gamma": self.gamma,
            "gamma_level": self.gamma_level,
            "gamma_state": self.gamma_state,
            "fit_points": self.fit_points,
            "fit_rms": self.fit_rms,
            "caveat": self.caveat,
            "taus": [float(x) for x in self.taus],
            "ground_prob": [float(x) for x in self.ground_prob],
            "level_survival": [float(x) for x in self.level_survival],
            "state_survival": [float(x) for x in self.state_survival],
        }


def _quadratic_rate_fit(taus: np.ndarray, signal: np.ndarray,
                        window_fraction: float = 0.1,
                        min_points: int = 3) -> tuple[float, int, float]:
    """Fit signal ~ (gamma tau)^2 on the early-rise window.

    The window keeps points with signal <= window_fraction * max(signal),
    padded to at least min_points positive-tau points. Returns (gamma,
    points used, relative rms residual).
    """
    pos = taus > 0
    t = taus[pos]
    y = signal[pos]
    if len(t) == 0:
        return 0.0, 0, 0.0
    y_max = float(y.max())
    if y_max <= 1e-14:
        return 0.0, 0, 0.0
    inside = y <= window_fraction * y_max
    # the early window is a prefix of the grid; stop at the first exit
    first_exit = int(np.argmin(inside)) if not inside.all() else len(t)
    n_fit = max(first_exit, min(min_points, len(t)))
    t_fit = t[:n_fit]
    y_fit = y[:n_fit]
    t2 = t_fit ** 2
    denom = float(np.dot(t2, t2))
    if denom == 0.0:
        return 0.0, 0, 0.0
    slope = float(np.dot(t2, y_fit) / denom)
    gamma = math.sqrt(max(slope, 0.0))
    resid = y_fit - slope * t2
    scale = max(float(np.max(np.abs(y_fit))), 1e-300)
    rms = float(np.sqrt(np.mean(resid ** 2)) / scale)
    return gamma, int(n_fit), rms


def escape_rate_proxy(instance: IsingInstance, schedule: AnnealSchedule,
                      s_target: float,
                      offsets: Optional[OffsetVector] = None,
                      prepared_state: Optional[int] = None,
                      taus: Optional[np.ndarray] = None,
                      config: Optional[SamplerConfig] = None,
                      ground_states: Optional[Sequence[int]] = None,
                      level_states: Optional[Sequence[int]] = None,
                      cache: Optional[DiagonalBasisCache] = None) -> EscapeRateReport:
    """Hold H(s_target) fixed and watch a prepared excited state leak out.

    The prepared state defaults to the lowest-index member of the first
    excited classical level. Population transferred into the classical
    ground manifold is the escape signal; level_survival and the prepared
    state's own survival are recorded alongside for diagnostics.
    """
    if config is None:
        config = SamplerConfig()
    _check_size(instance.n)
    if taus is None:
        taus = np.linspace(0.0, 40.0, 81)
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or len(taus) < 4:
        raise ValidationError("need a 1-d dwell grid with at least 4 points")
    if taus[0] != 0.0 or np.any(np.diff(taus) <= 0):
        raise ValidationError("dwell grid must start at 0 and increase strictly")
    spectrum = enumerate_spectrum(instance, k_levels=2)
    if ground_states is None:
        ground_states = spectrum.ground_states
    if prepared_state is None or level_states is None:
        e_levels = spectrum.energies
        if prepared_state is None:
            prepared_state = min(spectrum.first_excited_states)
        e_prep = instance.energy(prepared_state)
        if level_states is None:
            if abs(e_prep - e_levels[1]) <= 1e-9:
                level_states = spectrum.first_excited_states
            else:
                dim = 1 << instance.n
                energies = instance.energies(np.arange(dim, dtype=np.int64))
                level_states = np.nonzero(np.abs(energies - e_prep) <= 1e-9)[0]
    gs_idx = np.asarray(list(ground_states), dtype=np.int64)
    lvl_idx = np.asarray(list(level_states), dtype=np.int64)
    if prepared_state not in set(int(x) for x in lvl_idx):
        raise ValidationError("prepared state must belong to its own level")

    if cache is None:
        cache = DiagonalBasisCache(instance)
    op = HamiltonianOperator.at_fraction(instance, schedule, s_target,
                                         offsets=offsets, cache=cache)
    dim = 1 << instance.n
    psi = np.zeros(dim, dtype=complex)
    psi[prepared_state] = 1.0

    ground_prob = np.empty(len(taus))
    level_survival = np.empty(len(taus))
    state_survival = np.empty(len(taus))
    stats = KrylovStats()
    for k, tau in enumerate(taus):
        if k > 0:
            psi = krylov_propagate(op.matvec, psi, float(tau - taus[k - 1]),
                                   tol=config.krylov_tol,
                                   m_max=config.krylov_m_max, stats=stats)
        p = np.abs(psi) ** 2
        ground_prob[k] = float(p[gs_idx].sum())
        level_survival[k] = float(p[lvl_idx].sum())
        state_survival[k] = float(p[prepared_state])
    deviation = abs(float(np.linalg.norm(psi)) - 1.0)
    if deviation > config.norm_tol:
        raise SolverError(f"norm drift {deviation:.3e} exceeds {config.norm_tol:.3e}")

    gamma, n_fit, rms = _quadratic_rate_fit(taus, ground_prob)
    gamma_level, _, _ = _quadratic_rate_fit(taus, 1.0 - level_survival)
    gamma_state, _, _ = _quadratic_rate_fit(taus, 1.0 - state_survival)
    return EscapeRateReport(s_target=float(s_target),
                            prepared_state=int(prepared_state), taus=taus,
                            ground_prob=ground_prob,
                            level_survival=level_survival,
                            state_survival=state_survival,
                            gamma=gamma, gamma_level=gamma_level,
                            gamma_state=gamma_state,
                            fit_points=n_fit, fit_rms=rms)


def calibrate_anneal_time(instance: IsingInstance, schedule: AnnealSchedule,
                          target: tuple[float, float] = (0.05, 0.4),
                          t_initial: float = 2.0, t_max: float = 5000.0,
                          growth: float = 2.0,
                          config: Optional[SamplerConfig] = None,
                          max_bisections: int = 10) -> tuple[float, float]:
    """Find an anneal time whose exact ground-state probability hits the window.

    Walks a geometric ladder until p_GS enters [lo, hi]; if the ladder
    steps over the window (p_GS is close to monotone in anneal time but
    not exactly), bisects between the straddling rungs. Returns the time
    and its p_GS.
    """
    lo, hi = target
    if not (0 < lo < hi < 1):
        raise ValidationError("target window must satisfy 0 < lo < hi < 1")
    if config is None:
        config = SamplerConfig()
    spectrum = enumerate_spectrum(instance, k_levels=1)
    gs = spectrum.ground_states
    cache = DiagonalBasisCache(instance)

    def p_at(t: float) -> float:
        cfg = replace(config, anneal_time=t)
        return evolve_anneal(instance, schedule, config=cfg,
                             cache=cache).ground_probability(gs)

    t_prev, p_prev = None, None
    t = t_initial
    while t <= t_max:
        p = p_at(t)
        if lo <= p <= hi:
            return t, p
        if p_prev is not None and p_prev < lo <= hi < p:
            t_lo, t_hi = t_prev, t
            for _ in range(max_bisections):
                t_mid = math.sqrt(t_lo * t_hi)
                p_mid = p_at(t_mid)
                if lo <= p_mid <= hi:
                    return t_mid, p_mid
                if p_mid < lo:
                    t_lo = t_mid
                else:
                    t_hi = t_mid
            break
        if p > hi:
            break
        t_prev, p_prev = t, p
        t *= growth
    raise SolverError(f"no anneal time in [{t_initial}, {t_max}] reached p_GS window {target}")


def save_evolution_summary(result: EvolutionResult, path) -> None:
    with open(path, "w") as f:
        json.dump({
            "format": "offsetqa-evolution",
            "version": 1,
            "anneal_time": result.anneal_time,
            "n_slices": result.n_slices,
            "norm_deviation": result.norm_deviation,
            "matvecs": result.matvecs,
            "max_krylov_dim": result.max_krylov_dim,
            "splits": result.splits,
        }, f, indent=2, sort_keys=True)
        f.write("\n")
