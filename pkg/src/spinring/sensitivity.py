"""Closed-form derivative of the transfer probability w.r.t. a structured perturbation,
its readout-window average, and the resulting log-sensitivity.

For ``H~ = sum_l lam_l P_l`` the derivative of ``|<OUT|exp(-i H~ t)|IN>|^2`` along a
symmetric direction ``S`` is

    -2t sum_{m,n} <OUT|P_m S P_n|IN> sinc(t w_mn / 2)
          * sum_l <IN|P_l|OUT> sin(t (w_nl + w_ml) / 2),     w_ab = lam_a - lam_b,

with the unnormalized ``sinc(0) = 1``.  Degenerate eigenvalues must share one cluster
projection, which :func:`spinring.spectral.decompose` guarantees.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fidelity import QUAD_POINTS, window_nodes, windowed_probability
from .ring_model import (
    BiasController,
    PerturbationSpec,
    RingSpec,
    check_spin,
    perturbation_structure,
    perturbed_hamiltonian,
)
from .spectral import SpectralDecomposition, decompose

EPS_CLAMP = 1e-12


@dataclass(frozen=True)
class SensitivityResult:
    derivative: float
    windowed_prob: float
    log_sensitivity: float
    clamped: bool = False


def _sinc(x):
    return np.sinc(x / np.pi)


def _kernel(decomp: SpectralDecomposition, i_in: int, i_out: int, ts: np.ndarray) -> np.ndarray:
    """``K[t, m, n] = sinc(t w_mn / 2) * sum_l <IN|P_l|OUT> sin(t (w_nl + w_ml) / 2)``.

    The sum over ``l`` equals ``Im(exp(it(lam_m + lam_n)/2) <IN|U(t)|OUT>)``, which
    keeps the cost quadratic in the number of clusters.
    """
    lam = decomp.eigenvalues
    c = decomp.projections[:, i_in, i_out]
    ts = np.atleast_1d(ts)
    amp = np.exp(-1j * np.multiply.outer(ts, lam)) @ c  # <IN|U(t)|OUT>
    half = np.exp(0.5j * np.multiply.outer(ts, lam))  # (T, L)
    inner = (half[:, :, None] * half[:, None, :] * amp[:, None, None]).imag
    w_mn = lam[:, None] - lam[None, :]
    return _sinc(0.5 * ts[:, None, None] * w_mn) * inner


def _matrix_elements(decomp: SpectralDecomposition, structure: np.ndarray, i_in: int, i_out: int) -> np.ndarray:
    """``A[m, n] = <OUT| P_m S P_n |IN>``."""
    X = decomp.projections[:, i_out, :]  # rows <OUT|P_m
    Y = decomp.projections[:, :, i_in]  # columns P_n|IN>
    return X @ structure @ Y.T


def probability_derivative(
    decomp: SpectralDecomposition,
    structure: np.ndarray,
    in_spin: int,
    out_spin: int,
    t,
) -> float | np.ndarray:
    i_in = check_spin(in_spin, decomp.n)
    i_out = check_spin(out_spin, decomp.n)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    A = _matrix_elements(decomp, np.asarray(structure, dtype=float), i_in, i_out)
    K = _kernel(decomp, i_in, i_out, ts)
    d = -2.0 * ts * np.einsum("mn,tmn->t", A, K)
    return float(d[0]) if np.ndim(t) == 0 else d


def windowed_derivative(
    decomp: SpectralDecomposition,
    structure: np.ndarray,
    in_spin: int,
    out_spin: int,
    t_f: float,
    dt: float,
    quad_points: int = QUAD_POINTS,
) -> float:
    if not t_f > dt >= 0:
        raise ValueError(f"need t_f > dt >= 0, got t_f={t_f}, dt={dt}")
    ts, ws = window_nodes(t_f, dt, quad_points)
    return float(ws @ probability_derivative(decomp, structure, in_spin, out_spin, ts))


def bias_gradient(
    decomp: SpectralDecomposition,
    in_spin: int,
    out_spin: int,
    t_f: float,
    dt: float,
    quad_points: int = QUAD_POINTS,
) -> np.ndarray:
    """Gradient of the windowed probability w.r.t. every bias ``D_k`` (structure ``e_k e_k^T``)."""
    i_in = check_spin(in_spin, decomp.n)
    i_out = check_spin(out_spin, decomp.n)
    ts, ws = window_nodes(t_f, dt, quad_points)
    Kbar = np.einsum("t,tmn->mn", ws * ts, _kernel(decomp, i_in, i_out, ts))
    X = decomp.projections[:, i_out, :]  # [m, k]
    Y = decomp.projections[:, :, i_in]  # [n, k]
    return -2.0 * np.einsum("mk,nk,mn->k", X, Y, Kbar)


def log_sensitivity(
    spec: RingSpec,
    ctrl: BiasController,
    pert: PerturbationSpec,
    quad_points: int = QUAD_POINTS,
    decomp: SpectralDecomposition | None = None,
) -> SensitivityResult:
    """``|d prob / d delta| / (1 - prob)`` of the windowed probability at ``pert.magnitude``.

    ``decomp`` may be supplied when it already describes the perturbed Hamiltonian.
    """
    if decomp is None:
        decomp = decompose(perturbed_hamiltonian(spec, ctrl, [pert]))
    S = perturbation_structure(spec, ctrl, pert)
    dt = ctrl.window_halfwidth
    prob = windowed_probability(decomp, ctrl.in_spin, ctrl.out_spin, ctrl.t_f, dt, quad_points)
    deriv = windowed_derivative(decomp, S, ctrl.in_spin, ctrl.out_spin, ctrl.t_f, dt, quad_points)
    return sensitivity_from(deriv, prob)


def sensitivity_from(derivative: float, windowed_prob: float) -> SensitivityResult:
    gap = 1.0 - windowed_prob
    clamped = gap < EPS_CLAMP
    return SensitivityResult(
        derivative=derivative,
        windowed_prob=windowed_prob,
        log_sensitivity=abs(derivative) / max(gap, EPS_CLAMP),
        clamped=clamped,
    )
