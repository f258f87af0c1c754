"""Kendall tau, its normal-approximation test with a power flag, and Stouffer's Z."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

Z_ALPHA = -1.645  # one-sided alpha = 0.05, lower tail
Z_POWER80 = 0.8416  # Phi^-1(0.80)
POWER_THRESHOLD = Z_ALPHA - Z_POWER80  # -2.4866


@dataclass(frozen=True)
class RankCorrelationResult:
    tau: float
    n_samples: int
    z: float
    p: float
    reject_h0: bool
    power80: bool

    @property
    def p_rounded(self) -> float:
        return round(self.p, 4)


@dataclass(frozen=True)
class StoufferResult:
    z_s: float
    p_s: float
    k_tests: int


def normal_cdf(x: float) -> float:
    return float(ndtr(x))


def _count_inversions(a: np.ndarray) -> int:
    """Pairs i < j with a[i] > a[j] (bottom-up merge sort)."""
    a = list(a)
    n = len(a)
    inv = 0
    width = 1
    buf = a[:]
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    inv += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k : k + mid - i] = a[i:mid]
            k += mid - i
            buf[k : k + hi - j] = a[j:hi]
        a, buf = buf, a
        width *= 2
    return inv


def _tied_pairs(*cols: np.ndarray) -> int:
    _, counts = np.unique(np.column_stack(cols), axis=0, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall tau-a: pairs tied in either coordinate count as neither concordant
    nor discordant; the denominator is always ``l (l - 1) / 2``.  O(l log l).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    total = n * (n - 1) // 2
    order = np.lexsort((y, x))
    ys = y[order]
    t_x = _tied_pairs(x)
    t_y = _tied_pairs(y)
    t_xy = _tied_pairs(x, y)
    # after sorting by (x, y) no inversion lies within an x-tie, so every inversion is discordant
    discordant = _count_inversions(ys)
    concordant = total - t_x - t_y + t_xy - discordant
    return (concordant - discordant) / total


def sigma_tau(n_samples: int) -> float:
    l = n_samples
    if l < 2:
        raise ValueError("need at least two samples")
    return math.sqrt(2 * (2 * l + 5) / (9 * l * (l - 1)))


def z_score(tau: float, n_samples: int) -> float:
    return tau / sigma_tau(n_samples)


def hypothesis_test(z: float, alpha: float = 0.05) -> tuple[float, bool]:
    """Lower-tailed test of H0: tau = 0.  Returns ``(p, reject)`` with strict ``z < -1.645``."""
    if alpha != 0.05:
        raise NotImplementedError("only the alpha = 0.05 threshold is tabulated")
    return normal_cdf(z), z < Z_ALPHA


def power_flag(z: float, n_samples: int | None = None) -> bool:
    """True when power >= 0.80 taking the observed tau as the population tau.

    Power is ``Phi(-1.645 - z)`` for either sample size, so the threshold
    ``z < -2.4866`` does not depend on ``n_samples``.
    """
    return z < POWER_THRESHOLD


def rank_correlation(x: Sequence[float], y: Sequence[float]) -> RankCorrelationResult:
    tau = kendall_tau(x, y)
    n = len(x)
    z = z_score(tau, n)
    p, reject = hypothesis_test(z)
    return RankCorrelationResult(tau=tau, n_samples=n, z=z, p=p, reject_h0=reject, power80=power_flag(z, n))


def stouffer(z_list: Sequence[float]) -> StoufferResult:
    z = np.asarray(z_list, dtype=float)
    if z.size == 0:
        raise ValueError("Stouffer's method needs at least one Z-score")
    z_s = float(z.sum() / math.sqrt(z.size))
    return StoufferResult(z_s=z_s, p_s=normal_cdf(z_s), k_tests=int(z.size))
