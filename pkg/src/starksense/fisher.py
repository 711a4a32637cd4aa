"""Quantum and classical Fisher information (MHz^-2) for the gradient h."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .basis import SubspaceBasis
from .dynamics import OutcomeDistribution, QuantumState, trajectory
from .hamiltonian import ModelParams, build_hamiltonian, dh_hamiltonian
from .lindblad import DecoherenceParams, DensityMatrix, LindbladPropagator

PROBABILITY_FLOOR = 1e-12
KINDS = ("QFI", "exact-CFI", "empirical-CFI")


class FisherValue(float):
    """A Fisher information value tagged with how it was obtained."""

    kind: str

    def __new__(cls, value: float, kind: str):
        if kind not in KINDS:
            raise ValueError(f"unknown Fisher kind {kind!r}")
        obj = super().__new__(cls, value)
        obj.kind = kind
        return obj

    def __repr__(self) -> str:
        return f"FisherValue({float(self)!r}, kind={self.kind!r})"


def _probs(P) -> np.ndarray:
    return P.probabilities if isinstance(P, OutcomeDistribution) else np.asarray(P, dtype=float)


def qfi_pure(psi: QuantumState | np.ndarray, dpsi: np.ndarray) -> FisherValue:
    """4 (<dpsi|dpsi> - |<dpsi|psi>|^2) for a normalized pure state."""
    amps = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi)
    dpsi = np.asarray(dpsi)
    if amps.shape != dpsi.shape:
        raise ValueError("state and derivative have different dimensions")
    value = 4.0 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(dpsi, amps)) ** 2)
    return FisherValue(value, "QFI")


def probability_derivative(psi: QuantumState | np.ndarray, dpsi: np.ndarray) -> np.ndarray:
    """dp_n/dh = 2 Re(c_n^* dc_n)."""
    amps = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi)
    return 2.0 * np.real(np.conj(amps) * dpsi)


def cfi_exact(P, dP, floor: float = PROBABILITY_FLOOR) -> FisherValue:
    """sum_n (dp_n)^2 / p_n over outcomes with p_n >= floor."""
    p = _probs(P)
    dp = np.asarray(dP, dtype=float)
    keep = p >= floor
    return FisherValue(float(np.sum(dp[keep] ** 2 / p[keep])), "exact-CFI")


def cfi_empirical(P_h, P_h_minus_eps, eps: float) -> FisherValue:
    """Backward-difference CFI from two (empirical) distributions at h and h - eps.

    Outcomes never observed at h are skipped.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    p, q = _probs(P_h), _probs(P_h_minus_eps)
    if p.shape != q.shape:
        raise ValueError("distributions live on different outcome sets")
    keep = p > 0
    value = np.sum(((p[keep] - q[keep]) / eps) ** 2 / p[keep])
    return FisherValue(float(value), "empirical-CFI")


def cfi_empirical_central(P_plus, P_minus, P_h, eps: float) -> FisherValue:
    """Central-difference variant: (P(h+eps) - P(h-eps)) / (2 eps)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    p = _probs(P_h)
    diff = (_probs(P_plus) - _probs(P_minus)) / (2 * eps)
    keep = p > 0
    return FisherValue(float(np.sum(diff[keep] ** 2 / p[keep])), "empirical-CFI")


def closed_fisher_series(params: ModelParams, basis: SubspaceBasis, psi0: QuantumState,
                         times: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """QFI and computational-basis CFI at each time (closed system)."""
    H = build_hamiltonian(params, basis)
    psi, dpsi = trajectory(H, dh_hamiltonian(basis), psi0, times)
    qfi = 4.0 * (np.einsum("ti,ti->t", dpsi.conj(), dpsi).real
                 - np.abs(np.einsum("ti,ti->t", dpsi.conj(), psi)) ** 2)
    p = np.abs(psi) ** 2
    dp = 2.0 * np.real(psi.conj() * dpsi)
    ratio = np.divide(dp ** 2, p, out=np.zeros_like(p), where=p >= PROBABILITY_FLOOR)
    return qfi, ratio.sum(axis=1)


def open_cfi_series(params: ModelParams, dec: DecoherenceParams, rho0: DensityMatrix,
                    times: Sequence[float], dt: float | None = None) -> np.ndarray:
    """Computational-basis CFI of the open-system state at each time.

    dp/dh comes from the tangent propagation of d rho/dh, not finite differences.
    """
    kwargs = {} if dt is None else {"dt": dt}
    prop = LindbladPropagator(params, dec, rho0.basis, **kwargs)
    rhos, drhos = prop.series(rho0, times, derivative=True)
    out = np.empty(len(rhos))
    for i, (r, d) in enumerate(zip(rhos, drhos)):
        out[i] = cfi_exact(np.real(np.diag(r)), np.real(np.diag(d)))
    return out
