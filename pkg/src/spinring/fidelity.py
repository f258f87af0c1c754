"""Transfer probability, its readout-window average and the projective tracking error."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .ring_model import check_spin
from .spectral import SpectralDecomposition, transition_amplitudes

QUAD_POINTS = 16


@lru_cache(maxsize=32)
def gauss_legendre(m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(m)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def window_nodes(t_f: float, dt: float, quad_points: int = QUAD_POINTS):
    """Nodes and weights averaging over ``[t_f - dt, t_f + dt]``; weights sum to 1."""
    if quad_points < 1:
        raise ValueError("quad_points must be >= 1")
    if dt == 0:
        return np.array([t_f]), np.array([1.0])
    x, w = gauss_legendre(quad_points)
    return t_f + dt * x, 0.5 * w


def _clamp_prob(p):
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise FloatingPointError(f"transfer probability {p} outside [0, 1] beyond rounding")
    return np.clip(p, 0.0, 1.0)


def transfer_probability(decomp: SpectralDecomposition, in_spin: int, out_spin: int, t) -> float | np.ndarray:
    """``|<OUT| exp(-iHt) |IN>|^2``; ``t`` may be a scalar or an array."""
    i_in = check_spin(in_spin, decomp.n)
    i_out = check_spin(out_spin, decomp.n)
    amp = transition_amplitudes(decomp, i_in, i_out, t)
    p = _clamp_prob(amp.real**2 + amp.imag**2)
    return float(p) if np.ndim(p) == 0 else p


def windowed_probability(
    decomp: SpectralDecomposition,
    in_spin: int,
    out_spin: int,
    t_f: float,
    dt: float,
    quad_points: int = QUAD_POINTS,
) -> float:
    if not t_f > dt >= 0:
        raise ValueError(f"need t_f > dt >= 0, got t_f={t_f}, dt={dt}")
    ts, ws = window_nodes(t_f, dt, quad_points)
    return float(np.clip(ws @ transfer_probability(decomp, in_spin, out_spin, ts), 0.0, 1.0))


def projective_error(fid: float) -> float:
    """Phase-free tracking error ``sqrt(1 - |<OUT|psi>|)``.

    Takes the unsquared fidelity; pass ``sqrt(prob)`` when starting from a probability.
    """
    if fid < -1e-12 or fid > 1 + 1e-12:
        raise ValueError(f"fidelity {fid} outside [0, 1]")
    return float(np.sqrt(1.0 - min(max(fid, 0.0), 1.0)))
