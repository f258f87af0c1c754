"""Eigendecomposition into degenerate-cluster projections and exact time evolution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLUSTER_TOL = 1e-9


@dataclass(frozen=True)
class SpectralDecomposition:
    """``H = sum_l eigenvalues[l] * projections[l]`` with one entry per cluster."""

    eigenvalues: np.ndarray  # (L,) ascending
    projections: np.ndarray  # (L, n, n)
    multiplicities: np.ndarray  # (L,)

    @property
    def n(self) -> int:
        return self.projections.shape[1]

    def matrix(self) -> np.ndarray:
        return np.einsum("l,lij->ij", self.eigenvalues, self.projections)

    def propagator(self, t: float) -> np.ndarray:
        return np.einsum("l,lij->ij", np.exp(-1j * self.eigenvalues * t), self.projections)


def eig_sym(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a real symmetric matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.linalg.norm(A), 1e-300)
    if np.linalg.norm(A - A.T) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    # symmetrize exactly so LAPACK sees the same triangle either way
    return np.linalg.eigh(0.5 * (A + A.T))


def cluster_projections(
    eigenvalues: np.ndarray,
    eigenvectors: np.ndarray,
    cluster_tol: float = CLUSTER_TOL,
) -> SpectralDecomposition:
    w = np.asarray(eigenvalues, dtype=float)
    V = np.asarray(eigenvectors, dtype=float)
    if np.any(np.diff(w) < 0):
        raise ValueError("eigenvalues must be ascending")
    gap = cluster_tol * max(1.0, w[-1] - w[0])
    # cluster boundaries where consecutive gap exceeds the tolerance
    labels = np.concatenate(([0], np.cumsum(np.diff(w) > gap)))
    L = labels[-1] + 1
    onehot = np.zeros((L, w.size))
    onehot[labels, np.arange(w.size)] = 1.0
    mult = onehot.sum(axis=1)
    vals = onehot @ w / mult
    projs = (V[None, :, :] * onehot[:, None, :]) @ V.T
    return SpectralDecomposition(vals, projs, mult.astype(int))


def decompose(H: np.ndarray, cluster_tol: float = CLUSTER_TOL) -> SpectralDecomposition:
    w, V = eig_sym(H)
    return cluster_projections(w, V, cluster_tol)


def evolve(decomp: SpectralDecomposition, state: np.ndarray, t: float) -> np.ndarray:
    """``exp(-iHt) state`` by spectral synthesis."""
    state = np.asarray(state, dtype=complex)
    if abs(np.linalg.norm(state) - 1.0) > 1e-12:
        raise ValueError("state must be normalized")
    phases = np.exp(-1j * decomp.eigenvalues * t)
    return np.einsum("l,lij,j->i", phases, decomp.projections, state)


def transition_amplitudes(decomp: SpectralDecomposition, i_in: int, i_out: int, t) -> np.ndarray:
    """``<out| exp(-iHt) |in>`` for an array of times; indices are 0-based."""
    t = np.asarray(t, dtype=float)
    c = decomp.projections[:, i_out, i_in]
    return np.exp(-1j * np.multiply.outer(t, decomp.eigenvalues)) @ c
