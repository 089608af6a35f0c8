"""Optional compiled hot loops.

The statevector matvec dominates every dynamics pipeline, and the pure
numpy formulation makes one full memory pass per qubit. When numba is
importable a fused single-pass kernel replaces it; results agree with the
numpy path to rounding (summation order differs), and everything works
without numba installed.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    @numba.njit(cache=True)
    def _flip_matvec_kernel(diag, v, half, out):  # pragma: no cover - jit body
        n = half.shape[0]
        dim = v.shape[0]
        for x in range(dim):
            acc = diag[x] * v[x]
            for i in range(n):
                acc -= half[i] * v[x ^ (1 << i)]
            out[x] = acc

    def flip_matvec(diag: np.ndarray, v: np.ndarray, half: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        _flip_matvec_kernel(diag, v, half, out)
        return out

except ImportError:  # pragma: no cover - exercised only without numba
    flip_matvec = None
