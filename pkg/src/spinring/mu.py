"""Generalized plants, linear fractional transformations and a structured singular
value lower bound for the two-block structure ``diag(delta * I_n, Delta_p)``.

With the controller closed in (``M = F_l(P, -iD)``) and the scalar uncertainty
closed on top (``T_zw(delta) = F_u(M, delta I)``), the full performance block
``Delta_p`` is destabilizing at norm ``1 / sigma_max(T_zw(delta))``.  Hence

    mu(M) = max_delta min(sigma_max(T_zw(delta)), 1 / |delta|),

and every evaluated ``delta`` certifies a lower bound.  Where ``I - delta M11`` is
singular the scalar block alone is destabilizing and the bound is ``1 / |delta|``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

COND_LIMIT = 1e14


class SingularPlantError(np.linalg.LinAlgError):
    pass


class ResolventSingular(np.linalg.LinAlgError):
    """``I - delta * M11`` is numerically singular; treat the gain as infinite."""


class PlantKind(str, Enum):
    COUPLING = "coupling"
    SPILLAGE = "spillage"


@dataclass(frozen=True)
class OrthComplementBasis:
    rows: np.ndarray  # (n - 1, n)


@dataclass(frozen=True)
class GeneralizedPlant:
    """3x3 block plant from ``(eta, w, u)`` to ``(v, z, psi)``."""

    blocks: tuple  # 3x3 nested tuple of complex arrays, blocks[i][j] = P_{i+1, j+1}
    kind: PlantKind

    def __getitem__(self, ij):
        i, j = ij
        return self.blocks[i - 1][j - 1]

    def matrix(self) -> np.ndarray:
        return np.block([[b for b in row] for row in self.blocks])


@dataclass(frozen=True)
class ClosedPlant:
    M11: np.ndarray
    M12: np.ndarray
    M21: np.ndarray
    M22: np.ndarray

    def scaled(self, c: complex) -> "ClosedPlant":
        return ClosedPlant(c * self.M11, c * self.M12, c * self.M21, c * self.M22)


@dataclass(frozen=True)
class MuResult:
    beta: float
    witness_delta: complex
    witness_gain: float


def singular_values(A: np.ndarray) -> np.ndarray:
    """Singular values in descending order (works on stacks of matrices)."""
    return np.linalg.svd(np.asarray(A), compute_uv=False)


def orth_complement(out_spin: int, n: int) -> OrthComplementBasis:
    """Rows spanning the orthogonal complement of ``|out_spin>``.

    Uses the Householder reflector sending ``e_out`` to ``e_1``; its last ``n - 1``
    rows are orthonormal and orthogonal to ``e_out``.
    """
    if n < 2 or not 1 <= out_spin <= n:
        raise ValueError(f"output spin {out_spin} invalid for n={n}")
    e = np.zeros(n)
    e[out_spin - 1] = 1.0
    v = e.copy()
    v[0] -= 1.0
    Q = np.eye(n)
    if np.any(v):
        Q -= 2.0 * np.outer(v, v) / (v @ v)
    return OrthComplementBasis(Q[1:])


def open_loop_phi(H: np.ndarray) -> np.ndarray:
    """``Phi = (sI + iH)^-1`` at ``s = 0``."""
    iH = 1j * np.asarray(H, dtype=float)
    if np.linalg.cond(iH) > 1e12:
        raise SingularPlantError("iH is singular (ring size divisible by 4?); Phi at s=0 undefined")
    return np.linalg.inv(iH)


def assemble_plant(H: np.ndarray, structure: np.ndarray, C: OrthComplementBasis | np.ndarray, kind) -> GeneralizedPlant:
    """Generalized plant for coupling (``S_{k,k+1}``) or spillage (``D_k S_k``) uncertainty."""
    kind = PlantKind(kind)
    Cm = C.rows if isinstance(C, OrthComplementBasis) else np.asarray(C)
    H = np.asarray(H, dtype=float)
    S = np.asarray(structure, dtype=float)
    n = H.shape[0]
    if S.shape != (n, n) or Cm.shape != (n - 1, n):
        raise ValueError(f"dimension mismatch: H {H.shape}, structure {S.shape}, C {Cm.shape}")
    Phi = open_loop_phi(H)
    SPhi = S @ Phi
    CPhi = Cm @ Phi
    blocks = (
        (-1j * SPhi, 1j * SPhi, 1j * SPhi),
        (-CPhi, CPhi, CPhi),
        (-Phi, Phi, Phi),
    )
    return GeneralizedPlant(blocks, kind)


def close_controller(P: GeneralizedPlant, D: np.ndarray) -> ClosedPlant:
    """Lower LFT ``F_l(P, -iD)`` partitioned into the four ``M`` blocks."""
    D = np.asarray(D)
    if D.ndim == 1:
        D = np.diag(D)
    n = D.shape[0]
    R = np.eye(n) + 1j * P[3, 3] @ D
    if np.linalg.cond(R) > COND_LIMIT:
        raise SingularPlantError("I + i P33 D is singular for this controller")
    # -i D (I + i P33 D)^-1, shared by all four blocks
    K = -1j * D @ np.linalg.inv(R)
    return ClosedPlant(
        M11=P[1, 1] + P[1, 3] @ K @ P[3, 1],
        M12=P[1, 2] + P[1, 3] @ K @ P[3, 2],
        M21=P[2, 1] + P[2, 3] @ K @ P[3, 1],
        M22=P[2, 2] + P[2, 3] @ K @ P[3, 2],
    )


def upper_lft(M: ClosedPlant, delta: complex) -> np.ndarray:
    """``T_zw = M22 + M21 delta (I - M11 delta)^-1 M12``."""
    n = M.M11.shape[0]
    R = np.eye(n) - delta * M.M11
    if np.linalg.cond(R, 1) > COND_LIMIT:
        raise ResolventSingular(f"I - delta M11 singular at delta={delta}")
    return M.M22 + delta * (M.M21 @ np.linalg.solve(R, M.M12))


def _inv_or_nan(R):
    try:
        return np.linalg.inv(R)
    except np.linalg.LinAlgError:
        out = np.full_like(R, np.nan)
        for i, r in enumerate(R):
            try:
                out[i] = np.linalg.inv(r)
            except np.linalg.LinAlgError:
                pass
        return out


def performance_gains(M: ClosedPlant, deltas: np.ndarray) -> np.ndarray:
    """``sigma_max(T_zw(delta))`` for a batch of deltas, ``inf`` where the resolvent is singular.

    Singularity is judged by the 1-norm condition number (within a factor ``n`` of
    the 2-norm one), which comes free with the batched inverse.
    """
    deltas = np.asarray(deltas, dtype=complex).ravel()
    n = M.M11.shape[0]
    R = np.eye(n)[None] - deltas[:, None, None] * M.M11[None]
    Rinv = _inv_or_nan(R)
    with np.errstate(invalid="ignore"):
        cond1 = np.abs(R).sum(axis=1).max(axis=1) * np.abs(Rinv).sum(axis=1).max(axis=1)
    ok = cond1 <= COND_LIMIT
    gains = np.full(deltas.size, np.inf)
    if np.any(ok):
        T = M.M22[None] + deltas[ok, None, None] * (M.M21[None] @ (Rinv[ok] @ M.M12[None]))
        G = T @ np.conj(np.swapaxes(T, 1, 2))
        top = np.linalg.eigvalsh(G)[:, -1]
        gains[ok] = np.sqrt(np.maximum(top, 0.0))
    return gains


def _bound(M: ClosedPlant, deltas: np.ndarray):
    deltas = np.asarray(deltas, dtype=complex).ravel()
    gains = performance_gains(M, deltas)
    with np.errstate(divide="ignore"):
        inv = 1.0 / np.abs(deltas)
    return np.minimum(gains, inv), gains


def _best(values, deltas):
    """Index of the max with ties broken by smaller |delta|, then smaller phase."""
    phase = np.mod(np.angle(deltas), 2 * np.pi)
    order = np.lexsort((phase, np.abs(deltas), -values))
    return order[0]


def mu_lower_bound(
    M: ClosedPlant,
    n_radii: int = 61,
    n_phases: int = 64,
    refine_iters: int = 40,
    n_seeds: int = 8,
    radius_span: tuple[float, float] = (1e-3, 1e3),
) -> MuResult:
    """Lower bound on mu for ``diag(delta I, Delta_p)`` by a polar sweep plus local refinement.

    Candidates are ``delta = 0``, a log-radius x uniform-phase grid scaled by
    ``1 / sigma_max(M11)``, and the reciprocal eigenvalues of ``M11`` (where the
    scalar block alone is destabilizing).  The best ``n_seeds`` grid points and
    all eigenvalue seeds are refined by a shrinking coordinate search in
    ``(log r, phase)``.  The returned bound is re-evaluated at the witness.
    """
    s11 = singular_values(M.M11)[0]
    scale = 1.0 / s11 if s11 > 0 else 1.0
    log_r = np.linspace(np.log(radius_span[0]), np.log(radius_span[1]), n_radii) + np.log(scale)
    phis = 2 * np.pi * np.arange(n_phases) / n_phases
    grid = (np.exp(log_r)[:, None] * np.exp(1j * phis)[None, :]).ravel()

    # same arithmetic path as the grid so exact ties resolve toward delta = 0
    g0 = float(performance_gains(M, np.zeros(1))[0])
    vals, _ = _bound(M, grid)

    seeds = list(grid[np.argsort(-vals, kind="stable")[:n_seeds]])
    lam = np.linalg.eigvals(M.M11)
    lam = lam[np.abs(lam) > 1e-12 * max(s11, 1e-300)]
    seeds.extend(1.0 / lam)

    cand_d = [0j, *grid]
    cand_v = [g0, *vals]
    if seeds and refine_iters > 0:
        d_u = (log_r[1] - log_r[0]) if n_radii > 1 else 1.0
        d_p = 2 * np.pi / n_phases
        seeds = np.array(seeds)
        u = np.log(np.abs(seeds))
        th = np.angle(seeds)
        cur, _ = _bound(M, seeds)
        su = np.full(seeds.size, d_u)
        sp = np.full(seeds.size, d_p)
        moves = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
        for _ in range(refine_iters):
            tu = u[:, None] + moves[None, :, 0] * su[:, None]
            tt = th[:, None] + moves[None, :, 1] * sp[:, None]
            trial = np.exp(tu + 1j * tt)
            tv, _ = _bound(M, trial)
            tv = tv.reshape(trial.shape)
            k = np.argmax(tv, axis=1)
            best = tv[np.arange(seeds.size), k]
            up = best > cur
            rows = np.flatnonzero(up)
            u[rows] = tu[rows, k[rows]]
            th[rows] = tt[rows, k[rows]]
            cur[rows] = best[rows]
            su[~up] *= 0.5
            sp[~up] *= 0.5
        cand_d.extend(np.exp(u + 1j * th))
        cand_v.extend(cur)

    cand_d = np.array(cand_d)
    cand_v = np.array(cand_v)
    i = _best(cand_v, cand_d)
    wd = complex(cand_d[i])
    if wd == 0:
        return MuResult(beta=g0, witness_delta=0j, witness_gain=g0)
    # recertify at the witness
    val, gain = _bound(M, np.array([wd]))
    return MuResult(beta=float(val[0]), witness_delta=wd, witness_gain=float(gain[0]))
