"""Shared brute-force oracles, independent of the package's own constructors."""

import numpy as np
import pytest


def kron_embed(n_sites, site_dim, site, op):
    """Dense embedding of a local operator by explicit Kronecker products.

    Independent of rydthz.hilbert: builds identity factors one by one with
    np.kron, site 0 least significant.
    """
    full = np.array([[1.0 + 0j]])
    for j in range(n_sites):
        factor = np.asarray(op, dtype=complex) if j == site else np.eye(site_dim)
        full = np.kron(factor, full)
    return full


def kron_product_state(kets):
    """Dense product state by explicit Kronecker products (site 0 fastest)."""
    vec = np.array([1.0 + 0j])
    for k in kets:
        vec = np.kron(np.asarray(k, dtype=complex), vec)
    return vec


def dense_expm_evolve(h, psi0, times):
    """Eigendecomposition propagation of a dense Hermitian matrix."""
    evals, evecs = np.linalg.eigh(h)
    coeff = evecs.conj().T @ psi0
    return [evecs @ (np.exp(-1j * evals * t) * coeff) for t in times]


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
