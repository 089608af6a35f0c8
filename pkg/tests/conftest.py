"""Shared fixtures and independent oracles.

The dense Pauli builder below is deliberately written from scratch with
explicit Kronecker products so it shares no code with the package's
Hamiltonian assembly; tests compare the two constructions against each other.
"""

import numpy as np
import pytest

from offsetqa import IsingInstance, default_schedule

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


def op_on(n, i, op):
    """Lift a single-qubit operator onto qubit i of an n-qubit register.

    Basis index x has bit i of x as qubit i, so qubit 0 is the last
    Kronecker factor.
    """
    m = np.eye(1)
    for k in range(n - 1, -1, -1):
        m = np.kron(m, op if k == i else np.eye(2))
    return m


def dense_pauli_hamiltonian(instance, a_vec, b_vec):
    """Annealing Hamiltonian from explicit Pauli sums (independent oracle)."""
    n = instance.n
    dim = 1 << n
    a_vec = np.broadcast_to(np.asarray(a_vec, dtype=float), (n,))
    b_vec = np.broadcast_to(np.asarray(b_vec, dtype=float), (n,))
    ham = np.zeros((dim, dim))
    for i in range(n):
        ham -= 0.5 * a_vec[i] * op_on(n, i, SX)
        ham += 0.5 * b_vec[i] * instance.h[i] * op_on(n, i, SZ)
    for i, j, v in instance.couplings:
        ham += 0.5 * np.sqrt(b_vec[i] * b_vec[j]) * v * (op_on(n, i, SZ) @ op_on(n, j, SZ))
    return ham


def brute_energy(instance, state):
    """Classical energy by direct bit arithmetic, one state at a time."""
    spin = [1 - 2 * ((state >> i) & 1) for i in range(instance.n)]
    e = sum(instance.h[i] * spin[i] for i in range(instance.n))
    e += sum(v * spin[i] * spin[j] for i, j, v in instance.couplings)
    return e


@pytest.fixture(scope="session")
def schedule():
    return default_schedule()


@pytest.fixture(scope="session")
def triangle_afm():
    """3-spin antiferromagnetic triangle: 6-fold degenerate frustrated ground
    manifold at E = -1, ferromagnetic pair at E = +3."""
    return IsingInstance(n=3, h=np.zeros(3),
                         couplings=[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])


@pytest.fixture(scope="session")
def fm_pair():
    """Two spins, one ferromagnetic bond, no fields."""
    return IsingInstance(n=2, h=np.zeros(2), couplings=[(0, 1, -1.0)])


@pytest.fixture(scope="session")
def biased_pair():
    """Two coupled spins with fields; unique classical ground state 0."""
    return IsingInstance(n=2, h=np.array([-1.0, -0.5]), couplings=[(0, 1, -1.0)])


def random_test_instance(rng, n, edge_prob=0.6):
    h = np.round(rng.uniform(-2.0, 2.0, size=n), 3)
    couplings = [(i, j, float(np.round(rng.uniform(-2.0, 1.0), 3)))
                 for i in range(n) for j in range(i + 1, n)
                 if rng.random() < edge_prob]
    return IsingInstance(n=n, h=h, couplings=couplings)
