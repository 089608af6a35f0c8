"""Instantaneous Hamiltonians and low-lying spectra.

The annealing Hamiltonian acts on the 2^n packed basis of ising.py as

    H(s) = -(1/2) sum_i A_i(s) sx_i
           +(1/2) sum_i B_i(s) h_i sz_i
           +(1/2) sum_{i<j} sqrt(B_i(s) B_j(s)) J_ij sz_i sz_j

where sx_i flips bit i and sz_i reads spin 1 - 2 b_i. With all offsets zero
every A_i (B_i) collapses to the global envelope and the diagonal reduces to
(B/2) times the classical energy; a separate "uniform" construction builds
that reduced form directly so the two routes can be compared by tests.

Eigenvalue work is delegated to ARPACK (scipy eigsh) behind a deterministic
wrapper: a fixed or caller-supplied start vector, explicit residual checks,
and a dense fallback for small dimensions. Reported third gaps use the 4th
sorted eigenvalue (index 3, counting multiplicity).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from . import _kernels
from .errors import SolverError, ValidationError
from .ising import IsingInstance, spins_of
from .schedule import AnnealSchedule, OffsetVector

SPECTRA_N_MAX = 24
DENSE_CUTOFF = 512
DENSE_N_MAX = 14
DEGENERACY_TOL_REL = 1e-8
_DIAG_CHUNK = 1 << 20
_KERNEL_MIN_DIM = 2048


class DiagonalBasisCache:
    """Spin-product columns cached per instance for fast diagonal assembly.

    Hamiltonian diagonals at many anneal fractions are linear in the same
    per-state spin products, so gap scans and sliced time evolution reuse one
    of these across all their operator builds. Above max_cache_n the cache
    stays empty and diagonals are recomputed chunk-wise on demand.
    """

    def __init__(self, instance: IsingInstance, max_cache_n: int = 18):
        self.instance = instance
        self.n = instance.n
        self.dim = 1 << instance.n
        if instance.n <= max_cache_n:
            z = spins_of(np.arange(self.dim), instance.n).astype(float)
            ci, cj, _ = instance.coupling_arrays
            self._z = z
            self._zz = z[:, ci] * z[:, cj] if len(ci) else np.zeros((self.dim, 0))
        else:
            self._z = None
            self._zz = None

    def compatible_with(self, instance: IsingInstance) -> bool:
        """True when instance shares this cache's size and coupling pairs.

        Coupling values may differ (compensated variants reuse one cache);
        the cached spin-product columns only depend on the pair structure.
        """
        if instance is self.instance:
            return True
        if instance.n != self.n:
            return False
        ci, cj, _ = instance.coupling_arrays
        mi, mj, _ = self.instance.coupling_arrays
        return len(ci) == len(mi) and bool(np.all(ci == mi) and np.all(cj == mj))

    def diagonal(self, field_weights: np.ndarray, coupling_weights: np.ndarray) -> np.ndarray:
        """sum_i w_i z_i(x) + sum_e u_e z_i z_j(x) for every basis state."""
        if self._z is not None:
            return self._z @ field_weights + self._zz @ coupling_weights
        ci, cj, _ = self.instance.coupling_arrays
        out = np.empty(self.dim)
        for start in range(0, self.dim, _DIAG_CHUNK):
            stop = min(start + _DIAG_CHUNK, self.dim)
            z = spins_of(np.arange(start, stop), self.n).astype(float)
            part = z @ field_weights
            if len(ci):
                part += (z[:, ci] * z[:, cj]) @ coupling_weights
            out[start:stop] = part
        return out


@dataclass(frozen=True, eq=False)
class HamiltonianOperator:
    """H at one anneal fraction: a diagonal plus per-qubit bit-flip terms."""

    instance: IsingInstance
    s: float
    a: np.ndarray          # per-qubit transverse envelopes A_i
    diag: np.ndarray       # (2^n,) diagonal
    uniform: bool = False

    @property
    def n(self) -> int:
        return self.instance.n

    @property
    def dim(self) -> int:
        return len(self.diag)

    @classmethod
    def at_fraction(cls, instance: IsingInstance, schedule: AnnealSchedule,
                    s: float, offsets: Optional[OffsetVector] = None,
                    cache: Optional[DiagonalBasisCache] = None) -> "HamiltonianOperator":
        """Per-qubit-envelope construction (offsets None means all zero)."""
        _check_size(instance.n)
        delta = np.zeros(instance.n) if offsets is None else offsets.delta
        if len(delta) != instance.n:
            raise ValidationError("offsets length disagrees with instance n")
        a_i, b_i = schedule.eval_per_qubit(s, delta)
        ci, cj, cv = instance.coupling_arrays
        field_w = 0.5 * b_i * instance.h
        coup_w = 0.5 * np.sqrt(b_i[ci] * b_i[cj]) * cv
        if cache is None:
            cache = DiagonalBasisCache(instance)
        elif not cache.compatible_with(instance):
            raise ValidationError("diagonal cache built for a different coupling structure")
        return cls(instance=instance, s=float(s), a=a_i,
                   diag=cache.diagonal(field_w, coup_w))

    @classmethod
    def uniform_at_fraction(cls, instance: IsingInstance, schedule: AnnealSchedule,
                            s: float,
                            cache: Optional[DiagonalBasisCache] = None) -> "HamiltonianOperator":
        """Offset-free construction from the global envelopes only."""
        _check_size(instance.n)
        a_g, b_g = schedule.eval_global(s)
        ci, cj, cv = instance.coupling_arrays
        field_w = (0.5 * b_g) * instance.h
        coup_w = (0.5 * b_g) * cv
        if cache is None:
            cache = DiagonalBasisCache(instance)
        elif not cache.compatible_with(instance):
            raise ValidationError("diagonal cache built for a different coupling structure")
        return cls(instance=instance, s=float(s), a=np.full(instance.n, a_g),
                   diag=cache.diagonal(field_w, coup_w), uniform=True)

    @classmethod
    def from_envelopes(cls, instance: IsingInstance, a: np.ndarray,
                       b: np.ndarray,
                       cache: Optional[DiagonalBasisCache] = None) -> "HamiltonianOperator":
        """Direct construction from explicit per-qubit envelope values."""
        _check_size(instance.n)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != (instance.n,) or b.shape != (instance.n,):
            raise ValidationError("envelope vectors must have shape (n,)")
        if np.any(a < 0) or np.any(b < 0):
            raise ValidationError("envelopes must be nonnegative")
        ci, cj, cv = instance.coupling_arrays
        field_w = 0.5 * b * instance.h
        coup_w = 0.5 * np.sqrt(b[ci] * b[cj]) * cv
        cache = cache or DiagonalBasisCache(instance)
        return cls(instance=instance, s=float("nan"), a=a,
                   diag=cache.diagonal(field_w, coup_w))

    # -- action ---------------------------------------------------------------

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """H @ v, fused kernel when available, else per-qubit reshape passes."""
        v = np.ascontiguousarray(v)
        if v.ndim == 2 and v.shape[1] == 1:
            v = v[:, 0]
        if _kernels.flip_matvec is not None and self.dim >= _KERNEL_MIN_DIM:
            return _kernels.flip_matvec(self.diag, v, 0.5 * self.a)
        out = self.diag * v
        half = 0.5 * self.a
        for i in range(self.n):
            width = 1 << i
            v3 = v.reshape(-1, 2, width)
            o3 = out.reshape(-1, 2, width)
            o3[:, 0, :] -= half[i] * v3[:, 1, :]
            o3[:, 1, :] -= half[i] * v3[:, 0, :]
        return out

    def to_linear_operator(self) -> LinearOperator:
        return LinearOperator(shape=(self.dim, self.dim), matvec=self.matvec,
                              rmatvec=self.matvec, dtype=np.float64)

    def dense(self, n_max: int = DENSE_N_MAX) -> np.ndarray:
        if self.n > n_max:
            raise ValidationError(f"dense form limited to n <= {n_max}")
        m = np.diag(self.diag)
        idx = np.arange(self.dim)
        for i in range(self.n):
            m[idx, idx ^ (1 << i)] = -0.5 * self.a[i]
        return m

    def norm_bound(self) -> float:
        """Gershgorin upper bound on the spectral norm."""
        return float(np.max(np.abs(self.diag)) + 0.5 * self.a.sum())


def _check_size(n: int) -> None:
    if n > SPECTRA_N_MAX:
        raise ValidationError(f"spectra limited to n <= {SPECTRA_N_MAX}, got {n}")


# ---------------------------------------------------------------------------
# eigensolver wrapper


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray          # (dim, k), columns sign-fixed
    residuals: np.ndarray        # ||H v - lambda v|| per pair
    method: str                  # "dense" or "arpack"
    attempts: int
    degenerate_clusters: Tuple[Tuple[int, int], ...]  # half-open index ranges


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for col in range(out.shape[1]):
        lead = np.argmax(np.abs(out[:, col]))
        if out[lead, col] < 0:
            out[:, col] = -out[:, col]
    return out


def _cluster_indices(values: np.ndarray, tol: float) -> Tuple[Tuple[int, int], ...]:
    clusters = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > tol:
            clusters.append((start, i))
            start = i
    return tuple(clusters)


def lowest_eigenpairs(op: HamiltonianOperator, k: int, tol: float = 1e-10,
                      v0: Optional[np.ndarray] = None, ncv: Optional[int] = None,
                      dense_cutoff: int = DENSE_CUTOFF,
                      maxiter: Optional[int] = None) -> EigenResult:
    """Lowest k eigenpairs with explicit residuals and deterministic starts.

    Small problems (dim <= dense_cutoff, or k too close to dim) go through
    numpy's dense eigh; otherwise ARPACK runs with a supplied or all-ones
    start vector and is retried once with a larger subspace before raising
    SolverError. Degenerate clusters are grouped at 1e-8 times the norm bound.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    dim = op.dim
    if k > dim:
        raise ValidationError(f"k={k} exceeds dimension {dim}")
    cluster_tol = DEGENERACY_TOL_REL * max(op.norm_bound(), 1e-300)

    if dim <= dense_cutoff or k > dim - 2:
        m = op.dense(n_max=SPECTRA_N_MAX)
        vals, vecs = np.linalg.eigh(m)
        vals, vecs = vals[:k], vecs[:, :k]
        vecs = _sign_fix(vecs)
        res = np.linalg.norm(m @ vecs - vecs * vals, axis=0)
        return EigenResult(values=vals, vectors=vecs, residuals=res,
                           method="dense", attempts=1,
                           degenerate_clusters=_cluster_indices(vals, cluster_tol))

    if v0 is None:
        v0 = np.full(dim, 1.0 / np.sqrt(dim))
    else:
        v0 = np.asarray(v0, dtype=float)
        nrm = np.linalg.norm(v0)
        if not np.isfinite(nrm) or nrm == 0:
            raise ValidationError("start vector must be finite and nonzero")
    lin = op.to_linear_operator()
    ncv_eff = ncv or min(dim, max(4 * k + 1, 24))
    attempts = 0
    last_err: Optional[Exception] = None
    while attempts < 2:
        attempts += 1
        try:
            vals, vecs = eigsh(lin, k=k, which="SA", tol=tol, v0=v0,
                               ncv=ncv_eff, maxiter=maxiter)
            break
        except ArpackNoConvergence as err:
            last_err = err
            ncv_eff = min(dim, ncv_eff * 2)
            maxiter = (maxiter or dim * 10) * 4
    else:
        raise SolverError(f"ARPACK failed to converge after retries: {last_err}")

    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vecs = _sign_fix(vecs)
    res = np.array([np.linalg.norm(op.matvec(vecs[:, j]) - vals[j] * vecs[:, j])
                    for j in range(k)])
    res_tol = max(tol, 1e-12) * max(op.norm_bound(), 1.0) * 100
    if np.any(res > res_tol):
        raise SolverError(f"eigenpair residuals {res.max():.3e} exceed {res_tol:.3e}")
    return EigenResult(values=vals, vectors=vecs, residuals=res,
                       method="arpack", attempts=attempts,
                       degenerate_clusters=_cluster_indices(vals, cluster_tol))


# ---------------------------------------------------------------------------
# gap scans


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """Lowest-k eigenvalues along an s grid, plus solver diagnostics."""

    s_grid: np.ndarray
    energies: np.ndarray                  # (len(s_grid), k)
    k: int
    diagnostics: Dict = field(default_factory=dict)
    vectors: Dict[float, np.ndarray] = field(default_factory=dict)

    def third_gaps(self) -> np.ndarray:
        if self.k < 4:
            raise ValidationError("third gap needs k >= 4")
        return self.energies[:, 3] - self.energies[:, 0]

    def min_third_gap(self) -> "MinGapResult":
        return minimize_gap(self.s_grid, self.third_gaps())

    def first_gaps(self) -> np.ndarray:
        return self.energies[:, 1] - self.energies[:, 0]

    def save_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("s," + ",".join(f"E{i}" for i in range(self.k)) + "\n")
            for s, row in zip(self.s_grid, self.energies):
                f.write(repr(float(s)) + "," +
                        ",".join(repr(float(e)) for e in row) + "\n")


@dataclass(frozen=True)
class MinGapResult:
    s_target: float
    gap: float
    grid_index: int
    refined: bool


def minimize_gap(s_grid: np.ndarray, gaps: np.ndarray) -> MinGapResult:
    """Grid minimum with local quadratic refinement at interior minima."""
    s_grid = np.asarray(s_grid, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if len(s_grid) < 3:
        raise ValidationError("gap minimization needs at least 3 grid points")
    j = int(np.argmin(gaps))
    if j == 0 or j == len(s_grid) - 1:
        return MinGapResult(float(s_grid[j]), float(gaps[j]), j, refined=False)
    x0, x1, x2 = s_grid[j - 1], s_grid[j], s_grid[j + 1]
    g0, g1, g2 = gaps[j - 1], gaps[j], gaps[j + 1]
    denom = (x1 - x0) * (g1 - g2) - (x1 - x2) * (g1 - g0)
    if denom == 0:
        return MinGapResult(float(x1), float(g1), j, refined=False)
    xs = x1 - 0.5 * ((x1 - x0) ** 2 * (g1 - g2) - (x1 - x2) ** 2 * (g1 - g0)) / denom
    xs = float(np.clip(xs, x0, x2))
    # value of the interpolating parabola at its vertex
    coeff = np.polyfit([x0, x1, x2], [g0, g1, g2], 2)
    gs = float(np.polyval(coeff, xs))
    if not np.isfinite(gs) or gs > g1:
        return MinGapResult(float(x1), float(g1), j, refined=False)
    return MinGapResult(xs, gs, j, refined=True)


def gap_scan(instance: IsingInstance, schedule: AnnealSchedule,
             s_grid: Sequence[float], offsets: Optional[OffsetVector] = None,
             k: int = 4, tol: float = 1e-10, uniform: bool = False,
             dense_cutoff: int = DENSE_CUTOFF,
             store_vectors_at: Sequence[float] = (),
             cache: Optional[DiagonalBasisCache] = None) -> SpectrumReport:
    """Lowest-k spectrum along the grid, warm-starting each solve from the
    previous ground vector. uniform=True uses the offset-free construction
    (offsets must then be omitted)."""
    s_grid = np.asarray(list(s_grid), dtype=float)
    if np.any(np.diff(s_grid) <= 0):
        raise ValidationError("s grid must be strictly increasing")
    if uniform and offsets is not None and np.any(offsets.delta != 0):
        raise ValidationError("uniform scan cannot carry nonzero offsets")
    if cache is None:
        cache = DiagonalBasisCache(instance)
    energies = np.empty((len(s_grid), k))
    store = set(float(x) for x in store_vectors_at)
    vectors: Dict[float, np.ndarray] = {}
    residual_max = 0.0
    method = None
    v0 = None
    for row, s in enumerate(s_grid):
        if uniform:
            op = HamiltonianOperator.uniform_at_fraction(instance, schedule, s, cache=cache)
        else:
            op = HamiltonianOperator.at_fraction(instance, schedule, s, offsets, cache=cache)
        result = lowest_eigenpairs(op, k=k, tol=tol, v0=v0, dense_cutoff=dense_cutoff)
        energies[row] = result.values
        residual_max = max(residual_max, float(result.residuals.max()))
        method = result.method
        v0 = result.vectors[:, 0]
        if float(s) in store:
            vectors[float(s)] = result.vectors.copy()
    diag = {"residual_max": residual_max, "method": method, "k": k, "tol": tol,
            "uniform": uniform}
    return SpectrumReport(s_grid=s_grid, energies=energies, k=k,
                          diagnostics=diag, vectors=vectors)


# ---------------------------------------------------------------------------
# ground-state support of the instantaneous ground vector


def gs_support_distribution(ground_vector: np.ndarray,
                            ground_states: np.ndarray,
                            floor: float = 1e-12) -> Tuple[np.ndarray, float]:
    """Probability of each classical ground state under |psi|^2, renormalized.

    Returns (per-state distribution summing to 1, total ground mass). Raises
    if the ground manifold carries essentially no support.
    """
    gs = np.asarray(ground_states, dtype=np.int64)
    p = np.abs(ground_vector[gs]) ** 2
    mass = float(p.sum())
    if mass < floor:
        raise SolverError("state has no support on the classical ground manifold")
    return p / mass, mass
