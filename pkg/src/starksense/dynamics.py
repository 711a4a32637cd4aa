"""Closed-system propagation, outcome distributions and exact state derivatives.

Energies are in MHz and times in ns, so an eigenvalue lam accumulates the
phase ``PHASE * lam * t`` radians.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .basis import SubspaceBasis
from .hamiltonian import SpectralHamiltonian

PHASE = 2 * np.pi * 1e-3


class BasisMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuantumState:
    basis: SubspaceBasis
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    basis: SubspaceBasis
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (self.basis.dim,):
            raise BasisMismatch(f"expected {self.basis.dim} probabilities, got shape {p.shape}")
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probabilities", p)


def _check_basis(H: SpectralHamiltonian, basis: SubspaceBasis) -> None:
    if H.basis != basis:
        raise BasisMismatch("state and Hamiltonian live on different bases")


def initial_state(basis: SubspaceBasis, pattern: Iterable[int]) -> QuantumState:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(pattern)] = 1.0
    return QuantumState(basis, amps)


def evolve(H: SpectralHamiltonian, psi0: QuantumState, t: float) -> QuantumState:
    _check_basis(H, psi0.basis)
    if t < 0:
        raise ValueError("evolution time must be nonnegative")
    if t == 0:
        return QuantumState(psi0.basis, psi0.amplitudes.copy())
    V = H.eigenvectors
    phases = np.exp(-1j * PHASE * H.eigenvalues * t)
    return QuantumState(psi0.basis, V @ (phases * (V.T @ psi0.amplitudes)))


def outcome_distribution(psi: QuantumState) -> OutcomeDistribution:
    p = np.abs(psi.amplitudes) ** 2
    return OutcomeDistribution(psi.basis, p / p.sum())


def site_populations(dist: OutcomeDistribution) -> np.ndarray:
    """Probability that each site is excited; sums to the excitation number."""
    return dist.probabilities @ dist.basis.occupations


def _divided_differences(lam: np.ndarray, t: float) -> np.ndarray:
    """Kernel (f(l_m) - f(l_n)) / (l_m - l_n) of f(l) = exp(-i PHASE l t).

    Written as a sinc so near-degenerate pairs reduce smoothly to f'(l_m).
    """
    theta = PHASE * lam * t
    mean = 0.5 * (theta[:, None] + theta[None, :])
    half_gap = (theta[:, None] - theta[None, :]) / (2 * np.pi)
    return -1j * PHASE * t * np.exp(-1j * mean) * np.sinc(half_gap)


def propagator(H: SpectralHamiltonian, t: float) -> np.ndarray:
    V = H.eigenvectors
    return (V * np.exp(-1j * PHASE * H.eigenvalues * t)) @ V.T


def propagator_derivative(H: SpectralHamiltonian, dH: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(U, dU/dh)`` for U = exp(-i PHASE H t), via the eigenbasis Frechet derivative."""
    V = H.eigenvectors
    A = V.T @ dH @ V
    dU = V @ (_divided_differences(H.eigenvalues, t) * A) @ V.T
    return propagator(H, t), dU


def evolved_state_derivative(H: SpectralHamiltonian, dH: np.ndarray, psi0: QuantumState, t: float) -> np.ndarray:
    """Exact d/dh of ``evolve(H, psi0, t).amplitudes`` at fixed t."""
    _check_basis(H, psi0.basis)
    V = H.eigenvectors
    A = V.T @ dH @ V
    c = V.T @ psi0.amplitudes
    return V @ ((_divided_differences(H.eigenvalues, t) * A) @ c)


def trajectory(H: SpectralHamiltonian, dH: np.ndarray | None, psi0: QuantumState, times) -> tuple[np.ndarray, np.ndarray | None]:
    """Amplitudes (and their h-derivatives if ``dH`` is given) at many times.

    Returns arrays of shape (len(times), dim).
    """
    _check_basis(H, psi0.basis)
    times = np.asarray(times, dtype=float)
    V, lam = H.eigenvectors, H.eigenvalues
    c = V.T @ psi0.amplitudes
    phases = np.exp(-1j * PHASE * np.outer(times, lam))
    psi = (phases * c) @ V.T
    psi[times == 0] = psi0.amplitudes  # exact identity at t = 0
    if dH is None:
        return psi, None
    A = V.T @ dH @ V
    dpsi = np.empty_like(psi)
    for i, t in enumerate(times):
        dpsi[i] = V @ ((_divided_differences(lam, t) * A) @ c)
    return psi, dpsi
