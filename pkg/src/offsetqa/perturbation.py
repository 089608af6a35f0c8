"""Degenerate first-order perturbation analysis of a classical manifold.

Within a degenerate classical level, the transverse term couples states that
differ by one floppy-qubit flip: the effective coupling matrix is
V_ab = -A_q/2 on flip-graph edges (q the flipped qubit) and zero elsewhere.
The level's maximum first-order depression is

    delta'_exact = -min eig(V) = max eig(W),   W = -V (nonnegative),

and the closed-form estimate from per-qubit floppiness fractions F_i is

    delta'_first = (1/2) sum_i A_i F_i,

which equals the Rayleigh quotient of W in the uniform vector. Hence
delta'_exact >= delta'_first always, with equality exactly on regular flip
graphs (the uniform vector is then the Perron eigenvector).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import SolverError, ValidationError
from .ising import FlipGraph

PERTURBATION_DENSE_CUTOFF = 64


def _edge_weights(graph: FlipGraph, a: Union[float, np.ndarray]) -> np.ndarray:
    """Per-edge transverse amplitude A_q/2 for the qubit flipped on each edge."""
    a_vec = np.broadcast_to(np.asarray(a, dtype=float), (graph.n,))
    if np.any(a_vec < 0):
        raise ValidationError("transverse envelopes must be nonnegative")
    return 0.5 * a_vec[graph.edge_bits]


def effective_coupling_matrix(graph: FlipGraph, a: Union[float, np.ndarray]) -> csr_matrix:
    """V as a sparse symmetric matrix over the manifold's states."""
    w = _edge_weights(graph, a)
    m = graph.size
    rows = np.concatenate([graph.edges[:, 0], graph.edges[:, 1]])
    cols = np.concatenate([graph.edges[:, 1], graph.edges[:, 0]])
    data = np.concatenate([-w, -w])
    return csr_matrix((data, (rows, cols)), shape=(m, m))


def delta_prime_first_order(graph: FlipGraph, a: Union[float, np.ndarray]) -> float:
    """(1/2) sum_i A_i F_i from the manifold floppiness fractions."""
    a_vec = np.broadcast_to(np.asarray(a, dtype=float), (graph.n,))
    return float(0.5 * np.dot(a_vec, graph.floppy_fraction))


def delta_prime_exact(graph: FlipGraph, a: Union[float, np.ndarray],
                      dense_cutoff: int = PERTURBATION_DENSE_CUTOFF,
                      tol: float = 0.0) -> float:
    """-min eig(V), dense below the cutoff and ARPACK above it."""
    if graph.size == 0:
        raise ValidationError("empty manifold")
    if len(graph.edges) == 0:
        return 0.0
    w = _edge_weights(graph, a)
    m = graph.size
    if m <= dense_cutoff:
        dense = np.zeros((m, m))
        dense[graph.edges[:, 0], graph.edges[:, 1]] = w
        dense[graph.edges[:, 1], graph.edges[:, 0]] = w
        return float(np.linalg.eigvalsh(dense)[-1])
    mat = csr_matrix(
        (np.concatenate([w, w]),
         (np.concatenate([graph.edges[:, 0], graph.edges[:, 1]]),
          np.concatenate([graph.edges[:, 1], graph.edges[:, 0]]))),
        shape=(m, m))
    v0 = np.full(m, 1.0 / np.sqrt(m))
    try:
        vals = eigsh(mat, k=1, which="LA", v0=v0, tol=tol,
                     return_eigenvectors=False)
    except ArpackNoConvergence as err:
        raise SolverError(f"perturbation eigensolve failed: {err}") from err
    return float(vals[0])


@dataclass(frozen=True)
class PerturbationReport:
    """Exact vs first-order level depression, with regularity diagnostics."""

    manifold_size: int
    n_edges: int
    regular: bool
    degree_min: int
    degree_max: int
    delta_exact: float
    delta_first_order: float

    @property
    def difference(self) -> float:
        return self.delta_exact - self.delta_first_order

    def to_json_dict(self) -> dict:
        return {
            "manifold_size": self.manifold_size,
            "n_edges": self.n_edges,
            "regular": self.regular,
            "degree_min": self.degree_min,
            "degree_max": self.degree_max,
            "delta_exact": self.delta_exact,
            "delta_first_order": self.delta_first_order,
            "difference": self.difference,
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def perturbation_report(graph: FlipGraph, a: Union[float, np.ndarray],
                        equality_rtol: float = 1e-9) -> PerturbationReport:
    """Compute both depressions and check the regular-manifold equality.

    On a regular flip graph the two must agree to equality_rtol times the
    transverse scale; a violation indicates a solver problem and raises.
    delta_exact < delta_first (beyond tolerance) is impossible by the
    Rayleigh bound and also raises.
    """
    exact = delta_prime_exact(graph, a)
    first = delta_prime_first_order(graph, a)
    deg = graph.degree if graph.size else np.zeros(0, dtype=int)
    dmin = int(deg.min()) if len(deg) else 0
    dmax = int(deg.max()) if len(deg) else 0
    scale = float(np.max(np.broadcast_to(np.asarray(a, dtype=float), (graph.n,))))
    tol = equality_rtol * max(scale, 1e-300)
    if exact < first - tol:
        raise SolverError(
            f"delta'_exact={exact} fell below first order {first}; solver accuracy issue")
    regular = graph.is_regular
    if regular and abs(exact - first) > tol:
        raise SolverError(
            f"regular manifold but delta' mismatch {abs(exact - first):.3e} > {tol:.3e}")
    return PerturbationReport(manifold_size=graph.size, n_edges=len(graph.edges),
                              regular=regular, degree_min=dmin, degree_max=dmax,
                              delta_exact=exact, delta_first_order=first)
