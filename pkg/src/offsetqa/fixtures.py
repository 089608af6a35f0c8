"""Built-in study instances.

The centerpiece is a 16-qubit gadget engineered so that its first excited
level is a macroscopic false valley: a ferromagnetic 8-ring forced up by
local fields, with one unbiased anchor site, and a pendant qubit hanging off
every ring site pulled the other way. When the ring collapses downward the
pendant qubits see exactly cancelling field and coupling, so all eight are
floppy at once and the level is 2^8 = 256-fold degenerate.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import SolverError
from .ising import IsingInstance, enumerate_spectrum

GADGET_N_RING = 8
GADGET_N = 2 * GADGET_N_RING
GADGET_INNER = tuple(range(GADGET_N_RING))
GADGET_OUTER = tuple(range(GADGET_N_RING, GADGET_N))
GADGET_GROUND_STATE = 0
GADGET_GROUND_ENERGY = -17.0
GADGET_VALLEY_ENERGY = -15.0
GADGET_VALLEY_SIZE = 256


def pendant_ring_gadget(n_ring: int = GADGET_N_RING,
                        anchor_index: int = 0) -> IsingInstance:
    """Ferromagnetic ring with one unbiased anchor and opposing pendants.

    Ring qubits are 0..n_ring-1 with h=+1 except the anchor at h=0;
    pendant i is qubit n_ring+i, coupled only to ring site i, with h=-1.
    All couplings are -1. The all-up state is the unique ground state and
    the ring-down manifold is a fully floppy-pendant false valley.
    """
    if n_ring < 3:
        raise ValueError("ring needs at least 3 sites")
    if not 0 <= anchor_index < n_ring:
        raise ValueError("anchor index outside the ring")
    n = 2 * n_ring
    h = np.concatenate([np.ones(n_ring), -np.ones(n_ring)])
    h[anchor_index] = 0.0
    couplings = [(i, (i + 1) % n_ring, -1.0) for i in range(n_ring)]
    couplings += [(i, n_ring + i, -1.0) for i in range(n_ring)]
    return IsingInstance(n=n, h=h, couplings=couplings,
                         metadata={"family": "pendant-ring-gadget",
                                   "n_ring": n_ring,
                                   "anchor_index": anchor_index})


def gadget_false_valley_states(n_ring: int = GADGET_N_RING) -> np.ndarray:
    """Packed states of the false valley: ring all down, pendants free."""
    ring_mask = (1 << n_ring) - 1
    w = np.arange(1 << n_ring, dtype=np.int64)
    return ring_mask | (w << n_ring)


def gadget_certificate(n_ring: int = GADGET_N_RING) -> dict:
    """Brute-force spectral certificate for the gadget's low levels."""
    instance = pendant_ring_gadget(n_ring=n_ring)
    spectrum = enumerate_spectrum(instance, k_levels=3)
    return {
        "format": "offsetqa-certificate",
        "version": 1,
        "n": instance.n,
        "energies": [float(e) for e in spectrum.energies[:3]],
        "degeneracies": [int(d) for d in spectrum.degeneracies[:3]],
        "ground_states": [int(x) for x in spectrum.ground_states],
        "first_excited_states": sorted(int(x) for x in spectrum.first_excited_states),
    }


def verify_certificate(instance: IsingInstance, certificate: dict) -> None:
    """Re-enumerate and compare against a stored certificate."""
    k = len(certificate["energies"])
    spectrum = enumerate_spectrum(instance, k_levels=k)
    ok = (instance.n == certificate["n"]
          and all(abs(float(a) - b) <= 1e-9 for a, b in
                  zip(spectrum.energies[:k], certificate["energies"]))
          and [int(d) for d in spectrum.degeneracies[:k]] == certificate["degeneracies"]
          and sorted(int(x) for x in spectrum.ground_states)
          == sorted(certificate["ground_states"])
          and sorted(int(x) for x in spectrum.first_excited_states)
          == certificate["first_excited_states"])
    if not ok:
        raise SolverError("instance disagrees with its spectral certificate")


def bundled_fixture_text(name: str) -> str:
    """Raw text of a data file shipped inside the package."""
    return resources.files("offsetqa.data").joinpath(name).read_text()


@lru_cache(maxsize=1)
def bundled_gadget() -> IsingInstance:
    """The gadget as shipped on disk, re-verified against its certificate."""
    instance = IsingInstance.from_json_dict(
        json.loads(bundled_fixture_text("floppy_valley_gadget.json")))
    certificate = json.loads(
        bundled_fixture_text("floppy_valley_gadget.certificate.json"))
    verify_certificate(instance, certificate)
    return instance


@lru_cache(maxsize=4)
def floppy_valley_gadget(n_ring: int = GADGET_N_RING) -> IsingInstance:
    """The verified gadget: construction cross-checked by full enumeration."""
    instance = pendant_ring_gadget(n_ring=n_ring)
    spectrum = enumerate_spectrum(instance, k_levels=2)
    expected_valley = 1 << n_ring
    ok = (spectrum.degeneracies[0] == 1
          and spectrum.ground_states[0] == GADGET_GROUND_STATE
          and spectrum.degeneracies[1] == expected_valley
          and set(spectrum.first_excited_states)
          == set(int(x) for x in gadget_false_valley_states(n_ring)))
    if not ok:
        raise SolverError("gadget self-check failed; enumeration disagrees with construction")
    if n_ring == GADGET_N_RING:
        assert spectrum.energies[0] == GADGET_GROUND_ENERGY
        assert spectrum.energies[1] == GADGET_VALLEY_ENERGY
    return instance
