"""Single-excitation XX ring: Hamiltonian, controls and perturbation structures.

Spin indices are 1-based at every public entry point and wrap modulo ``n``
(spin ``n + 1`` is spin 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RingSpec:
    n: int
    coupling: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"ring needs n >= 3 spins, got {self.n}")
        if not self.coupling > 0:
            raise ValueError(f"coupling must be positive, got {self.coupling}")


def check_spin(k: int, n: int, what: str = "spin") -> int:
    """Validate a 1-based index and return its 0-based position."""
    if int(k) != k or not 1 <= k <= n:
        raise ValueError(f"{what} index {k} out of range 1..{n}")
    return int(k) - 1


@dataclass(frozen=True)
class BiasController:
    """Static diagonal bias ``D`` plus readout time and window."""

    bias: np.ndarray
    t_f: float
    window_halfwidth: float
    in_spin: int
    out_spin: int
    windowed_prob: float = float("nan")
    seed: int | None = None
    restart_index: int | None = None

    def __post_init__(self):
        bias = np.asarray(self.bias, dtype=float).copy()
        bias.setflags(write=False)
        object.__setattr__(self, "bias", bias)
        n = bias.size
        check_spin(self.in_spin, n)
        check_spin(self.out_spin, n)
        if not self.t_f > 0:
            raise ValueError(f"t_f must be positive, got {self.t_f}")
        if not self.window_halfwidth >= 0:
            raise ValueError("window half-width must be non-negative")
        p = self.windowed_prob
        if not np.isnan(p) and not 0.0 <= p <= 1.0:
            raise ValueError(f"windowed_prob {p} outside [0, 1]")

    @property
    def n(self) -> int:
        return self.bias.size

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.bias)


class PerturbationKind(str, Enum):
    COUPLING = "coupling"
    SPILLAGE = "spillage"


@dataclass(frozen=True)
class PerturbationSpec:
    kind: PerturbationKind
    site: int
    magnitude: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PerturbationKind(self.kind))
        if int(self.site) != self.site or self.site < 1:
            raise ValueError(f"perturbation site {self.site} must be a positive integer")

    @classmethod
    def coupling(cls, edge: int, magnitude: float = 0.0) -> "PerturbationSpec":
        return cls(PerturbationKind.COUPLING, edge, magnitude)

    @classmethod
    def spillage(cls, spin: int, magnitude: float = 0.0) -> "PerturbationSpec":
        return cls(PerturbationKind.SPILLAGE, spin, magnitude)

    def label(self, n: int) -> str:
        if self.kind is PerturbationKind.COUPLING:
            return f"{self.site}-{self.site % n + 1}"
        return str(self.site)


def build_hamiltonian(spec: RingSpec) -> np.ndarray:
    n = spec.n
    H = np.zeros((n, n))
    idx = np.arange(n)
    H[idx, (idx + 1) % n] = spec.coupling
    H[(idx + 1) % n, idx] = spec.coupling
    return H


def coupling_structure(spec: RingSpec, k: int) -> np.ndarray:
    """``S_{k,k+1}``: ones at (k, k+1) and (k+1, k), wrapping edge ``n`` to (n, 1)."""
    n = spec.n
    i = check_spin(k, n, "edge")
    j = (i + 1) % n
    S = np.zeros((n, n))
    S[i, j] = S[j, i] = 1.0
    return S


def spillage_structure(spec: RingSpec, k: int) -> np.ndarray:
    """``S_k`` = diag(..., 1/2, -1, 1/2, ...) centred on spin ``k``."""
    n = spec.n
    i = check_spin(k, n)
    d = np.zeros(n)
    d[i] = -1.0
    d[(i - 1) % n] += 0.5
    d[(i + 1) % n] += 0.5
    return np.diag(d)


def perturbation_structure(spec: RingSpec, ctrl: BiasController, pert: PerturbationSpec) -> np.ndarray:
    """Matrix multiplying ``pert.magnitude`` in the perturbed Hamiltonian.

    Coupling uncertainty enters as ``S_{k,k+1}``; bias spillage as ``D_k S_k``.
    """
    if pert.kind is PerturbationKind.COUPLING:
        return coupling_structure(spec, pert.site)
    i = check_spin(pert.site, spec.n)
    return ctrl.bias[i] * spillage_structure(spec, pert.site)


def perturbed_hamiltonian(
    spec: RingSpec,
    ctrl: BiasController,
    perts: Sequence[PerturbationSpec] = (),
) -> np.ndarray:
    if ctrl.n != spec.n:
        raise ValueError(f"controller has {ctrl.n} biases for a ring of {spec.n}")
    Ht = build_hamiltonian(spec) + np.diag(ctrl.bias)
    for p in perts:
        if p.magnitude != 0.0:
            Ht = Ht + p.magnitude * perturbation_structure(spec, ctrl, p)
        else:
            perturbation_structure(spec, ctrl, p)  # index validation only
    return Ht
