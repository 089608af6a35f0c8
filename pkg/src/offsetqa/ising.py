"""Classical Ising instances, exact level enumeration, and floppiness metrics.

Conventions used throughout the package:

* spins s_i in {+1, -1}; a basis state is a packed integer whose bit i holds
  qubit i, with bit value b mapped to spin s = 1 - 2b (bit 0 <-> spin up);
* dimensionless problem energy E(x) = sum_i h_i s_i + sum_{i<j} J_ij s_i s_j;
* the local field on qubit i in state x is lf_i = h_i + sum_j J_ij s_j, so
  flipping qubit i changes the energy by -2 s_i lf_i. Qubit i is "floppy" in
  x exactly when lf_i = 0 (flipping it costs nothing).

When h and J are all integer-valued, energies and local fields computed in
float64 are exact, so floppiness tests use exact zero; otherwise a small
absolute tolerance applies.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError

INSTANCE_FORMAT = "offsetqa-instance"
SAMPLES_FORMAT = "offsetqa-samples"

DEFAULT_H_RANGE = (-2.0, 2.0)
DEFAULT_J_RANGE = (-2.0, 1.0)
FLOPPY_EPS = 1e-9
LEVEL_TOL = 1e-9
ENUM_N_MAX = 26
MATERIALIZE_LIMIT = 2 ** 20
_CHUNK_BITS = 20


# ---------------------------------------------------------------------------
# packed-state helpers


def spins_of(states: np.ndarray, n: int) -> np.ndarray:
    """Spin array (..., n) of +-1 for packed states (any integer shape)."""
    states = np.asarray(states, dtype=np.int64)
    bits = (states[..., None] >> np.arange(n, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int64)


def pack_spins(spins: Sequence[int]) -> int:
    """Inverse of spins_of for a single state."""
    x = 0
    for i, s in enumerate(spins):
        if s == -1:
            x |= 1 << i
        elif s != 1:
            raise ValidationError(f"spin must be +-1, got {s}")
    return x


def antipodal(state: int, n: int) -> int:
    """The state with every spin reversed."""
    return state ^ ((1 << n) - 1)


def state_to_bitstring(state: int, n: int) -> str:
    """Qubit 0 is the first character; '0' means spin up."""
    return "".join("1" if (state >> i) & 1 else "0" for i in range(n))


def bitstring_to_state(bits: str) -> int:
    if not bits or any(c not in "01" for c in bits):
        raise ValidationError(f"not a bitstring: {bits!r}")
    return sum(1 << i for i, c in enumerate(bits) if c == "1")


# ---------------------------------------------------------------------------
# instance model


@dataclass(frozen=True, eq=False)
class IsingInstance:
    """Problem Hamiltonian data: fields h_i and couplings J_ij on i < j.

    Couplings are stored canonically as a sorted tuple of (i, j, value) with
    i < j and no repeated pair. h_range / j_range declare the representable
    ranges (validated here and again after coupling compensation).
    """

    n: int
    h: np.ndarray
    couplings: Tuple[Tuple[int, int, float], ...]
    h_range: Tuple[float, float] = DEFAULT_H_RANGE
    j_range: Tuple[float, float] = DEFAULT_J_RANGE
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        h = np.asarray(self.h, dtype=float)
        if h.shape != (self.n,):
            raise ValidationError(f"h must have shape ({self.n},), got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValidationError("h contains non-finite entries")
        lo, hi = self.h_range
        if np.any(h < lo) or np.any(h > hi):
            raise ValidationError(f"h outside declared range [{lo}, {hi}]")
        seen = set()
        canon = []
        for i, j, v in self.couplings:
            i, j, v = int(i), int(j), float(v)
            if i > j:
                i, j = j, i
            if not (0 <= i < j < self.n):
                raise ValidationError(f"coupling indices must satisfy 0 <= i < j < n, got ({i}, {j})")
            if (i, j) in seen:
                raise ValidationError(f"duplicate coupling pair ({i}, {j})")
            if not math.isfinite(v):
                raise ValidationError(f"coupling ({i}, {j}) is non-finite")
            jlo, jhi = self.j_range
            if not (jlo <= v <= jhi):
                raise ValidationError(f"coupling ({i}, {j})={v} outside declared range [{jlo}, {jhi}]")
            seen.add((i, j))
            canon.append((i, j, v))
        canon.sort()
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "couplings", tuple(canon))

    # -- cached vector views ------------------------------------------------

    @property
    def coupling_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        cached = self.__dict__.get("_coupling_arrays")
        if cached is None:
            if self.couplings:
                ci = np.array([c[0] for c in self.couplings], dtype=np.int64)
                cj = np.array([c[1] for c in self.couplings], dtype=np.int64)
                cv = np.array([c[2] for c in self.couplings], dtype=float)
            else:
                ci = np.zeros(0, dtype=np.int64)
                cj = np.zeros(0, dtype=np.int64)
                cv = np.zeros(0, dtype=float)
            cached = (ci, cj, cv)
            self.__dict__["_coupling_arrays"] = cached
        return cached

    @property
    def coupling_matrix(self) -> np.ndarray:
        """Dense symmetric (n, n) coupling matrix with zero diagonal."""
        cached = self.__dict__.get("_coupling_matrix")
        if cached is None:
            m = np.zeros((self.n, self.n))
            ci, cj, cv = self.coupling_arrays
            m[ci, cj] = cv
            m[cj, ci] = cv
            cached = m
            self.__dict__["_coupling_matrix"] = cached
        return cached

    @property
    def is_integral(self) -> bool:
        cached = self.__dict__.get("_is_integral")
        if cached is None:
            _, _, cv = self.coupling_arrays
            cached = bool(np.all(self.h == np.round(self.h)) and np.all(cv == np.round(cv)))
            self.__dict__["_is_integral"] = cached
        return cached

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        ci, cj, _ = self.coupling_arrays
        np.add.at(deg, ci, 1)
        np.add.at(deg, cj, 1)
        return deg

    # -- energetics ----------------------------------------------------------

    def energies(self, states: np.ndarray) -> np.ndarray:
        """Vectorized E(x) for an array of packed states."""
        z = spins_of(states, self.n).astype(float)
        ci, cj, cv = self.coupling_arrays
        e = z @ self.h
        if len(cv):
            e = e + (z[..., ci] * z[..., cj]) @ cv
        return e

    def energy(self, state: int) -> float:
        return float(self.energies(np.array([state]))[0])

    def local_fields(self, state: int) -> np.ndarray:
        """lf_i = h_i + sum_j J_ij s_j for every qubit at once."""
        z = spins_of(np.array([state]), self.n)[0].astype(float)
        return self.h + self.coupling_matrix @ z

    def local_field(self, state: int, i: int) -> float:
        return float(self.local_fields(state)[i])

    def floppy_mask(self, state: int) -> np.ndarray:
        lf = self.local_fields(state)
        if self.is_integral:
            return lf == 0.0
        return np.abs(lf) <= FLOPPY_EPS

    def is_floppy(self, state: int, i: int) -> bool:
        return bool(self.floppy_mask(state)[i])

    # -- derivation helpers ---------------------------------------------------

    def with_terms(self, h: np.ndarray, couplings: Iterable[Tuple[int, int, float]],
                   metadata: Optional[Dict] = None) -> "IsingInstance":
        return IsingInstance(n=self.n, h=np.asarray(h, dtype=float),
                             couplings=tuple(couplings),
                             h_range=self.h_range, j_range=self.j_range,
                             metadata=dict(self.metadata if metadata is None else metadata))

    def with_metadata(self, extra: Dict) -> "IsingInstance":
        merged = dict(self.metadata)
        merged.update(extra)
        return IsingInstance(n=self.n, h=self.h, couplings=self.couplings,
                             h_range=self.h_range, j_range=self.j_range,
                             metadata=merged)

    # -- serialization ---------------------------------------------------------

    def to_json_dict(self) -> Dict:
        return {
            "format": INSTANCE_FORMAT,
            "version": 1,
            "n": self.n,
            "h": [float(v) for v in self.h],
            "j": [[i, j, float(v)] for i, j, v in self.couplings],
            "h_range": [float(self.h_range[0]), float(self.h_range[1])],
            "j_range": [float(self.j_range[0]), float(self.j_range[1])],
            "metadata": self.metadata,
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_json_dict(cls, d: Dict) -> "IsingInstance":
        if d.get("format") != INSTANCE_FORMAT:
            raise ValidationError(f"not an instance file (format={d.get('format')!r})")
        if int(d.get("version", 0)) != 1:
            raise ValidationError(f"unsupported instance version {d.get('version')!r}")
        return cls(
            n=int(d["n"]),
            h=np.asarray(d["h"], dtype=float),
            couplings=tuple((int(i), int(j), float(v)) for i, j, v in d["j"]),
            h_range=tuple(d.get("h_range", DEFAULT_H_RANGE)),
            j_range=tuple(d.get("j_range", DEFAULT_J_RANGE)),
            metadata=dict(d.get("metadata", {})),
        )

    @classmethod
    def load(cls, path) -> "IsingInstance":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


# ---------------------------------------------------------------------------
# exact classical spectrum


@dataclass(frozen=True)
class ClassicalSpectrum:
    """Lowest k exact energy levels of an instance.

    states[l] holds the packed states of level l sorted ascending, or None if
    the level's degeneracy exceeded the materialization limit.
    """

    n: int
    energies: Tuple[float, ...]
    degeneracies: Tuple[int, ...]
    states: Tuple[Optional[np.ndarray], ...]

    @property
    def ground_energy(self) -> float:
        return self.energies[0]

    @property
    def ground_states(self) -> np.ndarray:
        if self.states[0] is None:
            raise ValidationError("ground level was not materialized")
        return self.states[0]

    @property
    def first_excited_states(self) -> np.ndarray:
        if len(self.states) < 2 or self.states[1] is None:
            raise ValidationError("first-excited level unavailable")
        return self.states[1]


def _iter_state_chunks(n: int):
    total = 1 << n
    step = min(total, 1 << _CHUNK_BITS)
    for start in range(0, total, step):
        yield np.arange(start, min(start + step, total), dtype=np.int64)


def enumerate_spectrum(instance: IsingInstance, k_levels: int = 2,
                       materialize_limit: int = MATERIALIZE_LIMIT,
                       n_max: int = ENUM_N_MAX,
                       level_tol: float = LEVEL_TOL) -> ClassicalSpectrum:
    """Exact lowest-k level structure by full enumeration (guarded by n_max).

    Two passes over all 2^n states in fixed-size chunks: the first finds the
    lowest k distinct energies and their degeneracies, the second collects the
    states of each retained level (skipped when degeneracy exceeds
    materialize_limit). Levels are clustered with absolute tolerance
    level_tol, which is only relevant for non-integral instances.
    """
    if instance.n > n_max:
        raise ValidationError(f"enumeration needs n <= {n_max}, got {instance.n}")
    if k_levels < 1:
        raise ValidationError("k_levels must be >= 1")

    # pass 1: merge per-chunk unique energies, pruning to a few more distinct
    # values than requested so tolerance clustering cannot lose a member
    keep = k_levels + 8
    values = np.zeros(0)
    counts = np.zeros(0, dtype=np.int64)
    for chunk in _iter_state_chunks(instance.n):
        e = instance.energies(chunk)
        cv, cc = np.unique(e, return_counts=True)
        values = np.concatenate([values, cv])
        counts = np.concatenate([counts, cc])
        values, inv = np.unique(values, return_inverse=True)
        counts = np.bincount(inv, weights=counts).astype(np.int64)
        if len(values) > keep:
            values, counts = values[:keep], counts[:keep]

    # cluster into levels
    edges = np.nonzero(np.diff(values) > level_tol)[0]
    bounds = np.concatenate([[0], edges + 1, [len(values)]])
    levels = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        levels.append((float(values[a]), float(values[b - 1]), int(counts[a:b].sum())))
    levels = levels[:k_levels]

    # pass 2: collect states per retained level
    members: List[Optional[List[np.ndarray]]] = [
        [] if deg <= materialize_limit else None for _, _, deg in levels
    ]
    if any(m is not None for m in members):
        for chunk in _iter_state_chunks(instance.n):
            e = instance.energies(chunk)
            for idx, (lo, hi, _) in enumerate(levels):
                if members[idx] is None:
                    continue
                mask = (e >= lo - level_tol / 2) & (e <= hi + level_tol / 2)
                if mask.any():
                    members[idx].append(chunk[mask])

    states = tuple(
        None if m is None else np.concatenate(m) if m else np.zeros(0, dtype=np.int64)
        for m in members
    )
    for (lo, hi, deg), st in zip(levels, states):
        if st is not None and len(st) != deg:
            raise AssertionError("level membership inconsistent between passes")
    return ClassicalSpectrum(
        n=instance.n,
        energies=tuple(lo for lo, _, _ in levels),
        degeneracies=tuple(deg for _, _, deg in levels),
        states=states,
    )


# ---------------------------------------------------------------------------
# flip graph of a degenerate manifold


@dataclass(frozen=True)
class FlipGraph:
    """Single-spin-flip connectivity restricted to one energy level."""

    n: int
    states: np.ndarray            # sorted packed states
    edges: np.ndarray             # (m, 2) indices into states, first < second
    edge_bits: np.ndarray         # (m,) which qubit flips across each edge
    floppy_fraction: np.ndarray   # per-qubit F_i

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def degree(self) -> np.ndarray:
        deg = np.zeros(self.size, dtype=int)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg

    @property
    def is_regular(self) -> bool:
        deg = self.degree
        return bool(self.size > 0 and np.all(deg == deg[0]))

    def adjacency(self) -> csr_matrix:
        m = self.size
        if len(self.edges):
            rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            data = np.ones(len(rows))
        else:
            rows = cols = np.zeros(0, dtype=int)
            data = np.zeros(0)
        return csr_matrix((data, (rows, cols)), shape=(m, m))

    @property
    def n_components(self) -> int:
        if self.size == 0:
            return 0
        ncomp, _ = connected_components(self.adjacency(), directed=False)
        return int(ncomp)


def manifold_flip_graph(states: np.ndarray, n: int,
                        materialize_limit: int = MATERIALIZE_LIMIT) -> FlipGraph:
    """Flip graph of a state set: edges join states differing in one bit.

    F_i is the fraction of manifold states whose bit-i flip partner is also in
    the manifold; for a complete energy level this equals the fraction of
    states in which qubit i is floppy.
    """
    states = np.asarray(states, dtype=np.int64)
    if len(states) > materialize_limit:
        raise ValidationError(
            f"manifold size {len(states)} exceeds materialize limit {materialize_limit}")
    order = np.argsort(states)
    states = states[order]
    if len(states) > 1 and np.any(np.diff(states) == 0):
        raise ValidationError("manifold contains repeated states")

    edge_a: List[np.ndarray] = []
    edge_b: List[np.ndarray] = []
    bits: List[np.ndarray] = []
    floppy = np.zeros(n)
    m = len(states)
    for i in range(n):
        partners = states ^ (1 << i)
        pos = np.searchsorted(states, partners)
        pos_clip = np.minimum(pos, m - 1) if m else pos
        present = (pos < m) & (states[pos_clip] == partners) if m else np.zeros(0, bool)
        floppy[i] = present.mean() if m else 0.0
        keep = present & (partners > states)
        if keep.any():
            edge_a.append(np.nonzero(keep)[0])
            edge_b.append(pos[keep])
            bits.append(np.full(int(keep.sum()), i, dtype=np.int64))
    if edge_a:
        edges = np.column_stack([np.concatenate(edge_a), np.concatenate(edge_b)])
        edge_bits = np.concatenate(bits)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
        edge_bits = np.zeros(0, dtype=np.int64)
    return FlipGraph(n=n, states=states, edges=edges, edge_bits=edge_bits,
                     floppy_fraction=floppy)


def manifold_floppiness(states: np.ndarray, n: int) -> np.ndarray:
    """Per-qubit F_i for a state set (see manifold_flip_graph)."""
    return manifold_flip_graph(states, n).floppy_fraction


# ---------------------------------------------------------------------------
# samples


@dataclass(frozen=True)
class SampleSet:
    """Multiset of observed basis states from one sampler run."""

    n: int
    states: np.ndarray           # unique packed states, sorted
    multiplicities: np.ndarray   # same length, >= 1
    sampler: str
    seed: Optional[int]
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        mult = np.asarray(self.multiplicities, dtype=np.int64)
        if states.shape != mult.shape:
            raise ValidationError("states and multiplicities must align")
        if len(states) and (np.any(np.diff(states) <= 0)):
            raise ValidationError("states must be strictly increasing")
        if np.any(mult < 1):
            raise ValidationError("multiplicities must be >= 1")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "multiplicities", mult)

    @property
    def total(self) -> int:
        return int(self.multiplicities.sum())

    @classmethod
    def from_draws(cls, draws: np.ndarray, n: int, sampler: str,
                   seed: Optional[int], metadata: Optional[Dict] = None) -> "SampleSet":
        states, mult = np.unique(np.asarray(draws, dtype=np.int64), return_counts=True)
        return cls(n=n, states=states, multiplicities=mult, sampler=sampler,
                   seed=seed, metadata=metadata or {})

    def merge(self, other: "SampleSet") -> "SampleSet":
        """Combine two runs; equivalent to concatenating their draw lists."""
        if self.n != other.n:
            raise ValidationError("cannot merge sample sets over different n")
        states = np.concatenate([self.states, other.states])
        mult = np.concatenate([self.multiplicities, other.multiplicities])
        uniq, inv = np.unique(states, return_inverse=True)
        summed = np.bincount(inv, weights=mult).astype(np.int64)
        sampler = self.sampler if self.sampler == other.sampler else "mixed"
        seeds = [s.seed for s in (self, other) if s.seed is not None]
        return SampleSet(n=self.n, states=uniq, multiplicities=summed,
                         sampler=sampler, seed=None,
                         metadata={"merged_seeds": seeds})

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(f"# {SAMPLES_FORMAT} v1 sampler={self.sampler} "
                    f"seed={self.seed} n={self.n} total={self.total}\n")
            f.write("bitstring,multiplicity\n")
            for s, m in zip(self.states, self.multiplicities):
                f.write(f"{state_to_bitstring(int(s), self.n)},{int(m)}\n")

    @classmethod
    def load(cls, path) -> "SampleSet":
        with open(path) as f:
            header = f.readline().strip()
            if not header.startswith(f"# {SAMPLES_FORMAT}"):
                raise ValidationError(f"not a sample file: {path}")
            meta = dict(tok.split("=", 1) for tok in header.split()[3:])
            cols = f.readline().strip()
            if cols != "bitstring,multiplicity":
                raise ValidationError(f"unexpected sample columns: {cols!r}")
            states, mult = [], []
            for line in f:
                line = line.strip()
                if not line:
                    continue
                bits, m = line.split(",")
                states.append(bitstring_to_state(bits))
                mult.append(int(m))
        n = int(meta["n"])
        order = np.argsort(states)
        seed = None if meta.get("seed") in (None, "None") else int(meta["seed"])
        return cls(n=n, states=np.asarray(states, dtype=np.int64)[order],
                   multiplicities=np.asarray(mult, dtype=np.int64)[order],
                   sampler=meta.get("sampler", "unknown"), seed=seed)


def ground_state_probability(samples: SampleSet, ground_states: np.ndarray) -> float:
    """Fraction of draws that landed in the given state set."""
    gs = np.sort(np.asarray(ground_states, dtype=np.int64))
    pos = np.searchsorted(gs, samples.states)
    pos_clip = np.minimum(pos, len(gs) - 1) if len(gs) else pos
    hit = (pos < len(gs)) & (gs[pos_clip] == samples.states) if len(gs) else \
        np.zeros(len(samples.states), bool)
    return float(samples.multiplicities[hit].sum() / samples.total)


def floppiness_fraction(instance: IsingInstance, samples: SampleSet) -> np.ndarray:
    """Sample-weighted probability mu_i that qubit i is floppy.

    Floppiness is always judged against this instance's (h, J); callers doing
    coupling compensation pass the original problem instance here.
    """
    if samples.n != instance.n:
        raise ValidationError("sample set and instance disagree on n")
    z = spins_of(samples.states, instance.n).astype(float)
    lf = instance.h[None, :] + z @ instance.coupling_matrix
    if instance.is_integral:
        floppy = lf == 0.0
    else:
        floppy = np.abs(lf) <= FLOPPY_EPS
    w = samples.multiplicities.astype(float)
    return (w[:, None] * floppy).sum(axis=0) / samples.total


# ---------------------------------------------------------------------------
# generators and testbed filtering


def chimera_cell_grid(rows: int, cols: int, shore: int) -> Tuple[int, List[Tuple[int, int]]]:
    """Couplers of a rows x cols grid of complete-bipartite K_{shore,shore} cells.

    Within a cell the two shores are fully coupled; shore-0 qubits link to the
    matching shore-0 qubit in the cell below, shore-1 to the cell at right.
    Returns (n_qubits, edge list). A 2 x 2 grid of shore-3 cells gives 24
    qubits of uniform degree 4.
    """
    if rows < 1 or cols < 1 or shore < 1:
        raise ValidationError("rows, cols, shore must all be >= 1")

    def q(r, c, u, k):
        return ((r * cols + c) * 2 + u) * shore + k

    edges = []
    for r in range(rows):
        for c in range(cols):
            for a in range(shore):
                for b in range(shore):
                    edges.append((q(r, c, 0, a), q(r, c, 1, b)))
            if r + 1 < rows:
                for k in range(shore):
                    edges.append((q(r, c, 0, k), q(r + 1, c, 0, k)))
            if c + 1 < cols:
                for k in range(shore):
                    edges.append((q(r, c, 1, k), q(r, c + 1, 1, k)))
    n = rows * cols * 2 * shore
    edges = sorted((min(a, b), max(a, b)) for a, b in edges)
    return n, edges


def chimera_automorphisms(rows: int, cols: int, shore: int) -> List[np.ndarray]:
    """Vertex permutations induced by relabeling the shores uniformly.

    Applies one permutation to every cell's shore-0 qubits and one to every
    cell's shore-1 qubits (this preserves the aligned inter-cell couplers).
    Cross-shore swaps and grid symmetries are intentionally not included.
    """
    n = rows * cols * 2 * shore
    base = np.arange(n)
    perms = []
    for p0 in itertools.permutations(range(shore)):
        for p1 in itertools.permutations(range(shore)):
            perm = base.copy()
            for cell in range(rows * cols):
                off0 = cell * 2 * shore
                off1 = off0 + shore
                for k in range(shore):
                    perm[off0 + k] = off0 + p0[k]
                    perm[off1 + k] = off1 + p1[k]
            perms.append(perm)
    return perms


def ring_chord_graph(n: int, n_chords: int,
                     rng: np.random.Generator) -> Tuple[int, List[Tuple[int, int]]]:
    """An n-cycle with n_chords extra chords drawn uniformly at random.

    Dense cell grids at 16 qubits cannot host large single-defect excited
    levels, but a long cycle can: its low excitations are wall pairs that
    diffuse along arcs, so chord placement controls both the level size and
    the instance diversity. Chords never duplicate ring edges or each other.
    """
    if n < 4:
        raise ValidationError("ring needs at least 4 qubits")
    if n_chords < 0 or n_chords > n * (n - 3) // 2:
        raise ValidationError("chord count outside the simple-graph range")
    edges = [(i, (i + 1) % n) for i in range(n)]
    present = {(min(i, j), max(i, j)) for i, j in edges}
    placed = 0
    while placed < n_chords:
        i, j = (int(x) for x in rng.integers(0, n, size=2))
        key = (min(i, j), max(i, j))
        if i == j or key in present:
            continue
        present.add(key)
        edges.append(key)
        placed += 1
    return n, sorted((min(a, b), max(a, b)) for a, b in edges)


def dihedral_automorphisms(n: int) -> List[np.ndarray]:
    """Rotations and reflections of an n-cycle's vertex labels."""
    rotations = [np.array([(i + k) % n for i in range(n)]) for k in range(n)]
    reflections = [np.array([(k - i) % n for i in range(n)]) for k in range(n)]
    return rotations + reflections


def random_pm_j_instance(n: int, edges: Sequence[Tuple[int, int]],
                         rng: np.random.Generator,
                         metadata: Optional[Dict] = None) -> IsingInstance:
    """Zero-field instance with J_ij drawn uniformly from {-1, +1}."""
    signs = rng.integers(0, 2, size=len(edges)) * 2 - 1
    couplings = tuple((i, j, float(s)) for (i, j), s in zip(edges, signs))
    return IsingInstance(n=n, h=np.zeros(n), couplings=couplings,
                         metadata=metadata or {})


def random_instance(n: int, rng: np.random.Generator, edge_prob: float = 0.5,
                    h_scale: float = 1.0) -> IsingInstance:
    """Generic random instance for tests: Erdos-Renyi couplings, gaussian h."""
    h = np.clip(rng.normal(0.0, h_scale, size=n), -2.0, 2.0)
    couplings = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                couplings.append((i, j, float(np.clip(rng.normal(0.0, 0.7), -2.0, 1.0))))
    return IsingInstance(n=n, h=h, couplings=tuple(couplings))


@dataclass(frozen=True)
class FilterResult:
    accepted: bool
    reason: str
    ground_degeneracy: int
    first_excited_degeneracy: int


def testbed_filter(spectrum: ClassicalSpectrum,
                   min_first_excited: int = 50) -> FilterResult:
    """Accept instances with exactly two antipodal ground states and a large
    first-excited level; everything else is rejected with a reason tag."""
    d0 = spectrum.degeneracies[0]
    d1 = spectrum.degeneracies[1] if len(spectrum.degeneracies) > 1 else 0
    if d0 != 2:
        return FilterResult(False, f"ground_degeneracy={d0}", d0, d1)
    g = spectrum.ground_states
    if antipodal(int(g[0]), spectrum.n) != int(g[1]):
        return FilterResult(False, "ground_pair_not_antipodal", d0, d1)
    if d1 < min_first_excited:
        return FilterResult(False, f"first_excited_degeneracy={d1}", d0, d1)
    return FilterResult(True, "ok", d0, d1)


def canonical_signature(instance: IsingInstance,
                        automorphisms: Optional[Sequence[np.ndarray]] = None) -> bytes:
    """Canonical form under spin-reversal gauge plus supplied relabelings.

    A gauge sigma in {+-1}^n maps J_ij -> J_ij sigma_i sigma_j and
    h_i -> h_i sigma_i without changing the spectrum. Fixing the gauge so a
    BFS spanning tree becomes uniformly ferromagnetic leaves only the
    gauge-invariant cycle frustration, which is hashed together with the
    gauged fields; the minimum over the supplied vertex permutations is the
    signature.
    """
    n = instance.n

    def gauge_fixed_key(h: np.ndarray, coup: Dict[Tuple[int, int], float]) -> bytes:
        adj: Dict[int, List[int]] = {i: [] for i in range(n)}
        for (i, j) in coup:
            adj[i].append(j)
            adj[j].append(i)
        sigma = np.zeros(n, dtype=int)
        comp = np.arange(n)
        for root in range(n):
            if sigma[root]:
                continue
            sigma[root] = 1
            queue = [root]
            while queue:
                u = queue.pop(0)
                for v in sorted(adj[u]):
                    if sigma[v] == 0:
                        juv = coup[(min(u, v), max(u, v))]
                        sigma[v] = -int(np.sign(juv)) * sigma[u] if juv != 0 else sigma[u]
                        comp[v] = root
                        queue.append(v)
        # gauged couplings cannot see a whole-component sign flip, so each
        # component's residual flip is fixed by the smaller field serialization
        hg = np.round(h * sigma, 9) + 0.0
        for root in np.unique(comp):
            mask = comp == root
            flipped = -hg[mask] + 0.0
            if flipped.tobytes() < hg[mask].tobytes():
                hg[mask] = flipped
        parts = [hg.tobytes()]
        for (i, j), v in sorted(coup.items()):
            parts.append(np.float64(np.round(v * sigma[i] * sigma[j], 9)).tobytes())
        return b"".join(parts)

    perms = automorphisms if automorphisms else [np.arange(n)]
    best = None
    for perm in perms:
        inv = np.empty(n, dtype=int)
        inv[perm] = np.arange(n)
        h_p = instance.h[inv]
        coup_p = {}
        for i, j, v in instance.couplings:
            a, b = int(perm[i]), int(perm[j])
            coup_p[(min(a, b), max(a, b))] = v
        key = gauge_fixed_key(h_p, coup_p)
        if best is None or key < best:
            best = key
    return best


def dedup_instances(instances: Sequence[IsingInstance],
                    automorphisms: Optional[Sequence[np.ndarray]] = None) -> List[IsingInstance]:
    """Drop later instances whose canonical signature was already seen."""
    seen = set()
    kept = []
    for inst in instances:
        sig = canonical_signature(inst, automorphisms)
        if sig not in seen:
            seen.add(sig)
            kept.append(inst)
    return kept


# ---------------------------------------------------------------------------
# coupon-collector sampling metrics


COUPON_IE_M_MAX = 20


def coupon_collector_expectation(p: np.ndarray, m_max: int = COUPON_IE_M_MAX) -> float:
    """Expected draws to see every category at least once.

    Categories have per-draw probabilities p_i > 0 with sum(p) <= 1; a
    deficient total models draws that land outside the tracked set. Uses the
    inclusion-exclusion identity E = sum_{S nonempty} (-1)^{|S|+1} / p(S) for
    m <= m_max and the equivalent integral
    E = int_0^inf (1 - prod_i (1 - exp(-p_i t))) dt above that.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise ValidationError("p must be a nonempty 1-d vector")
    if np.any(p <= 0):
        raise ValidationError("all coupon probabilities must be positive")
    if p.sum() > 1 + 1e-9:
        raise ValidationError(f"coupon probabilities sum to {p.sum()} > 1")
    m = len(p)
    if m <= m_max:
        # subset sums and parities built by doubling over the 2^m lattice
        sums = np.zeros(1)
        parity = np.zeros(1, dtype=np.int8)
        for pi in p:
            sums = np.concatenate([sums, sums + pi])
            parity = np.concatenate([parity, parity ^ 1])
        sums, parity = sums[1:], parity[1:]
        return float(np.sum(np.where(parity == 1, 1.0, -1.0) / sums))

    def tail(t):
        return 1.0 - np.prod(-np.expm1(-p * t))

    # integrate in two pieces so quad resolves both the knee and the tail
    knee = 1.0 / p.min()
    a, _ = integrate.quad(tail, 0.0, knee, limit=400, epsabs=1e-10, epsrel=1e-10)
    b, _ = integrate.quad(tail, knee, np.inf, limit=400, epsabs=1e-10, epsrel=1e-10)
    return float(a + b)


@dataclass(frozen=True)
class SccReport:
    """Coupon-collector uniformity metric for ground-state sampling."""

    s_cc: float
    n_coupons: int
    observed_coupons: int
    ground_mass: float
    expected_draws: float
    expected_draws_uniform: float
    antipodal_merged: bool
    p_floor: float


def s_cc_from_probs(probs: np.ndarray, m_max: int = COUPON_IE_M_MAX,
                    antipodal_merged: bool = False, p_floor: float = 0.0,
                    observed: Optional[int] = None) -> SccReport:
    """S_CC for explicit per-coupon probabilities (floors already applied).

    The reference is the same total mass spread uniformly over the same
    coupons, so uniform input gives exactly 1.0 and anything else exceeds it.
    """
    probs = np.asarray(probs, dtype=float)
    mass = float(probs.sum())
    m = len(probs)
    e_obs = coupon_collector_expectation(probs, m_max=m_max)
    e_unif = coupon_collector_expectation(np.full(m, mass / m), m_max=m_max)
    return SccReport(s_cc=float(e_obs / e_unif), n_coupons=m,
                     observed_coupons=m if observed is None else observed,
                     ground_mass=mass, expected_draws=e_obs,
                     expected_draws_uniform=e_unif,
                     antipodal_merged=antipodal_merged, p_floor=p_floor)


def s_cc_metric(samples: SampleSet, ground_states: np.ndarray,
                merge_antipodal: bool = True, p_floor: Optional[float] = None,
                m_max: int = COUPON_IE_M_MAX) -> SccReport:
    """Empirical sampling-uniformity metric over the ground manifold.

    Ground states are grouped into coupons (antipodal partners merged when
    requested); each coupon's probability is its observed draw fraction, with
    unobserved coupons floored at 1/(2 r) so the expectation stays finite.
    If flooring pushes the total above 1 the vector is rescaled to unit mass.
    """
    gs = np.sort(np.asarray(ground_states, dtype=np.int64))
    if len(gs) == 0:
        raise ValidationError("ground state set is empty")
    n = samples.n
    if merge_antipodal:
        partners = np.bitwise_xor(gs, (1 << n) - 1)
        keys = np.minimum(gs, partners)
        groups: Dict[int, List[int]] = {}
        for g, k in zip(gs, keys):
            groups.setdefault(int(k), []).append(int(g))
        coupon_states = [np.array(v, dtype=np.int64) for _, v in sorted(groups.items())]
    else:
        coupon_states = [np.array([g]) for g in gs]

    r = samples.total
    floor = (1.0 / (2 * r)) if p_floor is None else p_floor
    lookup = {int(s): int(m) for s, m in zip(samples.states, samples.multiplicities)}
    q = np.array([sum(lookup.get(int(g), 0) for g in members) / r
                  for members in coupon_states])
    observed = int(np.count_nonzero(q))
    q = np.where(q > 0, q, floor)
    if q.sum() > 1.0:
        q = q / q.sum()
    return s_cc_from_probs(q, m_max=m_max, antipodal_merged=merge_antipodal,
                           p_floor=floor, observed=observed)
