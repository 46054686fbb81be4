"""Shared test utilities: random states and small closed-form oracles."""

import numpy as np


def random_ket(rng, dim):
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return z / np.linalg.norm(z)


def random_density(rng, dim):
    """Random full-rank density matrix: Haar-ish unitary times random spectrum."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, _ = np.linalg.qr(z)
    p = rng.random(dim) + 1e-3
    p = p / p.sum()
    return (q * p) @ q.conj().T


def random_hermitian(rng, dim):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (z + z.conj().T) / 2
