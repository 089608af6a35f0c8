"""Anneal schedules and per-qubit anneal offsets.

A schedule is a sampled monotone table over the control parameter c in [0, 1]
with columns (c, s, A, B): s(c) is the nominal anneal fraction and A, B are
the transverse / problem energy envelopes at that control value. Per-qubit
offsets shift the control value qubit-wise: qubit i at nominal fraction s
runs at c_i = clamp(c(s) + delta_i, 0, 1), so its envelopes are
A_i = A(c_i), B_i = B(c_i). Positive delta advances a qubit (smaller A,
larger B at the same s).

The built-in synthetic schedule uses A(c) = A_max (1-c)^2, B(c) = B_max c^2,
s(c) = c on a 1025-point grid, which keeps the endpoint conventions
(A vanishes at c = 1, B vanishes at c = 0) exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .ising import IsingInstance

SCHEDULE_FORMAT = "offsetqa-schedule"
OFFSETS_FORMAT = "offsetqa-offsets"

DEFAULT_POINTS = 1025
DEFAULT_A_MAX = 8.0
DEFAULT_B_MAX = 12.0
DEFAULT_GRANULARITY = 0.002
DEFAULT_OFFSET_BOUND = 0.1
DEFAULT_S_STAR = 0.3
DEFAULT_RESCALE = 0.85

# Hardware control-bias endpoints of the digitized anneal range that the
# synthetic schedule stands in for (compound-junction bias in units of the
# flux quantum). Recorded for traceability only; no computation uses them.
CCJJ_FLUX_INITIAL = -0.6457
CCJJ_FLUX_FINAL = -0.7140


@dataclass(frozen=True, eq=False)
class AnnealSchedule:
    """Monotone sampled schedule table (see module docstring)."""

    c: np.ndarray
    s: np.ndarray
    A: np.ndarray
    B: np.ndarray
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        s = np.asarray(self.s, dtype=float)
        a = np.asarray(self.A, dtype=float)
        b = np.asarray(self.B, dtype=float)
        if not (c.shape == s.shape == a.shape == b.shape) or c.ndim != 1 or len(c) < 2:
            raise ValidationError("schedule columns must be equal-length 1-d arrays (>= 2 rows)")
        for name, col in (("c", c), ("s", s), ("A", a), ("B", b)):
            if not np.all(np.isfinite(col)):
                raise ValidationError(f"schedule column {name} has non-finite entries")
        if not (c[0] == 0.0 and c[-1] == 1.0 and np.all(np.diff(c) > 0)):
            raise ValidationError("c must increase strictly from 0 to 1")
        if not (s[0] == 0.0 and s[-1] == 1.0 and np.all(np.diff(s) >= 0)):
            raise ValidationError("s must be nondecreasing from 0 to 1")
        if np.any(a < 0) or np.any(b < 0):
            raise ValidationError("A and B must be nonnegative")
        if a[-1] > 1e-6 * max(b[-1], 1.0):
            raise ValidationError("A must vanish at c = 1 (relative to B there)")
        if b[0] > 1e-6 * max(b[-1], 1.0):
            raise ValidationError("B must vanish at c = 0")
        for name, arr in (("c", c), ("s", s), ("A", a), ("B", b)):
            object.__setattr__(self, name, arr)

    # -- interpolation -------------------------------------------------------

    def s_of_c(self, c) -> np.ndarray:
        return np.interp(np.clip(c, 0.0, 1.0), self.c, self.s)

    def c_of_s(self, s) -> np.ndarray:
        """Inverse of s(c); flat segments resolve to their c-midpoint."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any((s_arr < 0) | (s_arr > 1)):
            raise ValidationError("s must lie in [0, 1]")
        lo = np.searchsorted(self.s, s_arr, side="left")
        hi = np.searchsorted(self.s, s_arr, side="right")
        out = np.empty_like(s_arr)
        exact = hi > lo
        if exact.any():
            out[exact] = 0.5 * (self.c[lo[exact]] + self.c[hi[exact] - 1])
        miss = ~exact
        if miss.any():
            # strictly between two table values; linear inverse on that segment
            k = lo[miss]
            s0, s1 = self.s[k - 1], self.s[k]
            c0, c1 = self.c[k - 1], self.c[k]
            out[miss] = c0 + (s_arr[miss] - s0) * (c1 - c0) / (s1 - s0)
        return out if np.ndim(s) else float(out[0])

    def a_of_c(self, c) -> np.ndarray:
        return np.interp(c, self.c, self.A)

    def b_of_c(self, c) -> np.ndarray:
        return np.interp(c, self.c, self.B)

    def eval_global(self, s: float) -> Tuple[float, float]:
        """(A, B) at nominal anneal fraction s with no offsets."""
        c = self.c_of_s(s)
        return float(self.a_of_c(c)), float(self.b_of_c(c))

    def eval_per_qubit(self, s: float, delta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(A_i, B_i) arrays at fraction s for per-qubit offsets delta."""
        delta = np.asarray(delta, dtype=float)
        c = self.c_of_s(s)
        ci = np.clip(c + delta, 0.0, 1.0)
        return self.a_of_c(ci), self.b_of_c(ci)

    @property
    def a_max(self) -> float:
        return float(self.A.max())

    @property
    def b_max(self) -> float:
        return float(self.B.max())

    # -- serialization -------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(f"# {SCHEDULE_FORMAT} v1 rows={len(self.c)}\n")
            f.write("c,s,A,B\n")
            for row in zip(self.c, self.s, self.A, self.B):
                f.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "AnnealSchedule":
        rows = []
        with open(path) as f:
            header = f.readline()
            if not header.startswith(f"# {SCHEDULE_FORMAT}"):
                raise ValidationError(f"not a schedule file: {path}")
            cols = f.readline().strip()
            if cols != "c,s,A,B":
                raise ValidationError(f"unexpected schedule columns: {cols!r}")
            for line in f:
                line = line.strip()
                if line:
                    rows.append([float(tok) for tok in line.split(",")])
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValidationError("schedule rows must have four columns")
        return cls(c=arr[:, 0], s=arr[:, 1], A=arr[:, 2], B=arr[:, 3])


def default_schedule(points: int = DEFAULT_POINTS, a_max: float = DEFAULT_A_MAX,
                     b_max: float = DEFAULT_B_MAX) -> AnnealSchedule:
    """Built-in synthetic schedule (see module docstring)."""
    c = np.linspace(0.0, 1.0, points)
    return AnnealSchedule(c=c, s=c.copy(), A=a_max * (1.0 - c) ** 2,
                          B=b_max * c ** 2,
                          metadata={"synthetic": True, "a_max": a_max, "b_max": b_max})


# ---------------------------------------------------------------------------
# per-qubit offsets


@dataclass(frozen=True, eq=False)
class OffsetVector:
    """Per-qubit anneal offsets delta_i with a hardware-style bound and
    quantization granularity. Construction validates the bound only;
    quantization is applied explicitly via quantized()."""

    delta: np.ndarray
    bound: float = DEFAULT_OFFSET_BOUND
    granularity: float = DEFAULT_GRANULARITY

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        if delta.ndim != 1:
            raise ValidationError("delta must be a 1-d vector")
        if not np.all(np.isfinite(delta)):
            raise ValidationError("delta has non-finite entries")
        if self.bound <= 0 or self.granularity <= 0:
            raise ValidationError("bound and granularity must be positive")
        if np.any(np.abs(delta) > self.bound + 1e-12):
            raise ValidationError(f"|delta| exceeds bound {self.bound}")
        object.__setattr__(self, "delta", delta)

    @property
    def n(self) -> int:
        return len(self.delta)

    @classmethod
    def zeros(cls, n: int, bound: float = DEFAULT_OFFSET_BOUND,
              granularity: float = DEFAULT_GRANULARITY) -> "OffsetVector":
        return cls(delta=np.zeros(n), bound=bound, granularity=granularity)

    def clamped(self) -> "OffsetVector":
        return OffsetVector(delta=np.clip(self.delta, -self.bound, self.bound),
                            bound=self.bound, granularity=self.granularity)

    def quantized(self) -> "OffsetVector":
        """Round to the granularity grid, halves to even (stays within g/2)."""
        g = self.granularity
        q = np.round(self.delta / g) * g
        q = np.clip(q, -self.bound, self.bound)
        return OffsetVector(delta=q, bound=self.bound, granularity=g)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump({
                "format": OFFSETS_FORMAT,
                "version": 1,
                "n": self.n,
                "delta": [float(v) for v in self.delta],
                "bound": self.bound,
                "granularity": self.granularity,
            }, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "OffsetVector":
        with open(path) as f:
            d = json.load(f)
        if d.get("format") != OFFSETS_FORMAT:
            raise ValidationError(f"not an offsets file (format={d.get('format')!r})")
        vec = cls(delta=np.asarray(d["delta"], dtype=float),
                  bound=float(d.get("bound", DEFAULT_OFFSET_BOUND)),
                  granularity=float(d.get("granularity", DEFAULT_GRANULARITY)))
        if vec.n != int(d["n"]):
            raise ValidationError("offsets file length disagrees with its n")
        return vec


def compensate_couplings(instance: IsingInstance, schedule: AnnealSchedule,
                         offsets: OffsetVector, s_star: float = DEFAULT_S_STAR,
                         rescale: float = DEFAULT_RESCALE) -> IsingInstance:
    """Counteract the longitudinal side effect of offsets at one anneal point.

    With offsets, the effective coupling energy of pair (i, j) at fraction s*
    scales by sqrt(B_i B_j)/B; replacing J_ij by
    J'_ij = B(s*) J_ij / sqrt(B_i(s*) B_j(s*)) restores the intended problem
    Hamiltonian exactly at s = s* (orthogonal control there). The uniform
    rescale is applied to J' and h alike so the compensated values fit the
    declared ranges; validation failures raise ValidationError.
    """
    if not (0.0 < s_star <= 1.0):
        raise ValidationError("s_star must lie in (0, 1]")
    if not (0.0 < rescale <= 1.0):
        raise ValidationError("rescale must lie in (0, 1]")
    if offsets.n != instance.n:
        raise ValidationError("offsets length disagrees with instance n")
    _, b_global = schedule.eval_global(s_star)
    _, b_i = schedule.eval_per_qubit(s_star, offsets.delta)
    if b_global <= 0 or np.any(b_i <= 0):
        raise ValidationError("B must be positive at s_star for compensation")
    new_couplings = []
    for i, j, v in instance.couplings:
        scale = b_global / np.sqrt(b_i[i] * b_i[j])
        new_couplings.append((i, j, float(rescale * scale * v)))
    meta = dict(instance.metadata)
    meta["compensation"] = {"s_star": s_star, "rescale": rescale}
    return instance.with_terms(h=rescale * instance.h, couplings=new_couplings,
                               metadata=meta)
