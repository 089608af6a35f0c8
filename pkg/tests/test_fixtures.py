import numpy as np
import pytest

from offsetqa import (SolverError, bundled_gadget, enumerate_spectrum,
                      floppy_valley_gadget, gadget_certificate,
                      gadget_false_valley_states, pendant_ring_gadget,
                      verify_certificate)
from offsetqa.fixtures import (GADGET_GROUND_ENERGY, GADGET_GROUND_STATE,
                               GADGET_N, GADGET_VALLEY_ENERGY,
                               GADGET_VALLEY_SIZE)
from conftest import brute_energy


def test_gadget_shape():
    g = floppy_valley_gadget()
    assert g.n == GADGET_N == 16
    assert len(g.couplings) == 16
    assert all(v == -1.0 for _, _, v in g.couplings)
    assert g.h[0] == 0.0
    assert np.all(g.h[1:8] == 1.0)
    assert np.all(g.h[8:] == -1.0)
    assert g.metadata["family"] == "pendant-ring-gadget"


def test_gadget_low_levels():
    g = floppy_valley_gadget()
    assert g.energy(GADGET_GROUND_STATE) == GADGET_GROUND_ENERGY
    assert brute_energy(g, 0) == -17.0
    valley = gadget_false_valley_states()
    assert len(valley) == GADGET_VALLEY_SIZE == 256
    energies = g.energies(valley)
    assert np.all(energies == GADGET_VALLEY_ENERGY)
    # the valley is ring-down with every pendant configuration
    assert int(valley.min()) == 0xFF and int(valley.max()) == 0xFFFF
    assert np.all(valley & 0xFF == 0xFF)


def test_valley_pendants_all_floppy():
    g = floppy_valley_gadget()
    for state in (0xFF, 0xFFFF, 0xFF | (0b10110001 << 8)):
        mask = g.floppy_mask(state)
        assert np.array_equal(mask, np.array([False] * 8 + [True] * 8))
    # the true ground state has no floppy qubits at all
    assert not g.floppy_mask(0).any()


def test_certificate_roundtrip_and_tamper():
    g = floppy_valley_gadget()
    cert = gadget_certificate()
    verify_certificate(g, cert)
    assert cert["energies"] == [-17.0, -15.0, -13.0]
    assert cert["degeneracies"] == [1, 256, 502]
    bad = dict(cert)
    bad["degeneracies"] = [1, 255, 502]
    with pytest.raises(SolverError):
        verify_certificate(g, bad)
    # moving the anchor relabels an isospectral instance, so the
    # certificate rightly accepts it; a different size must fail
    verify_certificate(pendant_ring_gadget(anchor_index=1), cert)
    with pytest.raises(SolverError):
        verify_certificate(pendant_ring_gadget(n_ring=4), dict(cert))


def test_bundled_matches_constructed():
    disk = bundled_gadget()
    built = floppy_valley_gadget()
    assert disk.n == built.n
    assert np.array_equal(disk.h, built.h)
    assert disk.couplings == built.couplings


def test_small_ring_variant():
    g = floppy_valley_gadget(n_ring=4)
    assert g.n == 8
    spectrum = enumerate_spectrum(g, k_levels=2)
    assert spectrum.degeneracies[0] == 1
    assert spectrum.degeneracies[1] == 16
    assert set(spectrum.first_excited_states) == set(
        int(x) for x in gadget_false_valley_states(n_ring=4))


def test_constructor_validation():
    with pytest.raises(ValueError):
        pendant_ring_gadget(n_ring=2)
    with pytest.raises(ValueError):
        pendant_ring_gadget(anchor_index=8)
