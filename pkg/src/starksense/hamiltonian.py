"""Stark-Wannier chain Hamiltonian restricted to excitation subspaces.

All entries are in MHz (the Hamiltonian divided by 2*pi). The reference
qubit frequency is a multiple of the excitation number and is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .basis import SubspaceBasis


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Chain length, hopping J and gradient h (both MHz)."""

    L: int
    J: float = -8.0
    h: float = 0.0

    @property
    def onsite(self) -> np.ndarray:
        """On-site offsets h_j = (j - 1) h for j = 1..L."""
        return np.arange(self.L) * self.h

    def with_h(self, h: float) -> "ModelParams":
        return ModelParams(self.L, self.J, float(h))


@dataclass(frozen=True, eq=False)
class SpectralHamiltonian:
    basis: SubspaceBasis
    params: ModelParams
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.dim


@lru_cache(maxsize=64)
def hopping_matrix(basis: SubspaceBasis) -> np.ndarray:
    """Adjacency between patterns related by one nearest-neighbour hop (open chain).

    Cached per basis; the returned array is read-only.
    """
    n = basis.dim
    T = np.zeros((n, n))
    for a, pattern in enumerate(basis.patterns):
        occupied = set(pattern)
        for j in pattern:
            target = j + 1
            if target <= basis.L and target not in occupied:
                moved = (occupied - {j}) | {target}
                b = basis.index_of(moved)
                T[a, b] = T[b, a] = 1.0
    T.setflags(write=False)
    return T


def dh_weights(basis: SubspaceBasis) -> np.ndarray:
    return basis.occupations @ np.arange(basis.L, dtype=float)


def dh_hamiltonian(basis: SubspaceBasis) -> np.ndarray:
    """dH/dh: diagonal with sum_{j in S} (j - 1) for each pattern S."""
    return np.diag(dh_weights(basis))


def hamiltonian_matrix(params: ModelParams, basis: SubspaceBasis) -> np.ndarray:
    if basis.L != params.L:
        raise DimensionError(f"basis has L={basis.L} but params have L={params.L}")
    return params.J * hopping_matrix(basis) + np.diag(params.h * dh_weights(basis))


def build_hamiltonian(params: ModelParams, basis: SubspaceBasis) -> SpectralHamiltonian:
    """Build the subspace Hamiltonian and attach its symmetric eigendecomposition."""
    H = hamiltonian_matrix(params, basis)
    lam, V = np.linalg.eigh(H)
    return SpectralHamiltonian(basis, params, H, lam, V)
