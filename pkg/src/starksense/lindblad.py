"""Open-system dynamics: per-qubit amplitude damping and dephasing.

The master equation is

    d rho/dt = -i PHASE [H, rho]
               + sum_j 1/(2 T2*_j) (Z_j rho Z_j - rho)
               + sum_j 1/T1_j (s-_j rho s+_j - 1/2 {n_j, rho})

on the sector basis holding excitation numbers 0..k_max (jumps lower the
excitation number, so every lower sector must be kept). Rates are in 1/us,
times in ns.

Default integration is an integrating-factor ("Lawson") RK4: the unitary
part is applied exactly through the eigendecomposition and RK4 only sees the
dissipator. ``method="rk4"`` integrates the full generator with classic RK4.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .basis import SubspaceBasis, sector_basis
from .dynamics import PHASE, OutcomeDistribution, QuantumState, propagator_derivative
from .hamiltonian import ModelParams, build_hamiltonian, dh_weights

DEVICE_T1 = (16.1, 22.9, 13.7, 19.4, 33.1, 26.8, 32.9, 26.8, 34.2)
DEVICE_T2STAR = (2.1, 1.6, 2.0, 2.1, 2.2, 1.5, 1.9, 1.5, 2.1)
AVERAGE_T1 = 25.1
AVERAGE_T2STAR = 1.9

DEFAULT_DT = 0.1


@dataclass(frozen=True)
class DecoherenceParams:
    """Per-qubit T1 and T2* in microseconds; ``inf`` switches a channel off."""

    T1: tuple[float, ...]
    T2star: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "T1", tuple(float(x) for x in self.T1))
        object.__setattr__(self, "T2star", tuple(float(x) for x in self.T2star))
        if len(self.T1) != len(self.T2star):
            raise ValueError("T1 and T2* tables must have the same length")
        if any(not x > 0 for x in self.T1 + self.T2star):
            raise ValueError("coherence times must be positive (or inf)")

    @property
    def L(self) -> int:
        return len(self.T1)

    @classmethod
    def uniform(cls, L: int, T1: float = AVERAGE_T1, T2star: float = AVERAGE_T2STAR) -> "DecoherenceParams":
        return cls((T1,) * L, (T2star,) * L)

    @classmethod
    def ideal(cls, L: int) -> "DecoherenceParams":
        return cls.uniform(L, np.inf, np.inf)

    @classmethod
    def device(cls, mode: str = "per_qubit") -> "DecoherenceParams":
        """Measured device values (9 qubits).

        ``mode="uniform"`` uses the quoted averages 25.1 us / 1.9 us on every qubit.
        """
        if mode == "per_qubit":
            return cls(DEVICE_T1, DEVICE_T2STAR)
        if mode == "uniform":
            return cls.uniform(len(DEVICE_T1))
        raise ValueError(f"unknown decoherence mode {mode!r}")

    def rates(self) -> tuple[np.ndarray, np.ndarray]:
        """Relaxation and dephasing rates per ns."""
        return 1e-3 / np.array(self.T1), 1e-3 / np.array(self.T2star)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    basis: SubspaceBasis
    matrix: np.ndarray

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


def build_sector_basis(L: int, k_max: int) -> SubspaceBasis:
    return sector_basis(L, k_max)


def pure_density(state: QuantumState, basis: SubspaceBasis) -> DensityMatrix:
    """Embed a pure subspace state into a sector basis as |psi><psi|."""
    amps = np.zeros(basis.dim, dtype=complex)
    for i, pattern in enumerate(state.basis.patterns):
        amps[basis.index_of(pattern)] = state.amplitudes[i]
    return DensityMatrix(basis, np.outer(amps, amps.conj()))


def basis_density(basis: SubspaceBasis, pattern) -> DensityMatrix:
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    i = basis.index_of(pattern)
    rho[i, i] = 1.0
    return DensityMatrix(basis, rho)


def outcome_distribution_open(rho: DensityMatrix) -> OutcomeDistribution:
    p = np.clip(np.real(np.diag(rho.matrix)), 0.0, None)
    return OutcomeDistribution(rho.basis, p / p.sum())


class Dissipator:
    """Linear map rho -> dephasing + relaxation terms on a sector basis."""

    def __init__(self, basis: SubspaceBasis, dec: DecoherenceParams):
        if dec.L != basis.L:
            raise ValueError(f"decoherence table has {dec.L} qubits, basis has L={basis.L}")
        gamma1, gamma2 = dec.rates()
        occ = basis.occupations.astype(float)
        # (1/2T2)(z_a z_b - 1) = -(1/T2) wherever site occupations differ
        differs = occ[:, None, :] != occ[None, :, :]
        self.dephasing = -(differs * gamma2).sum(axis=-1)
        loss = occ @ gamma1
        self.anticomm = -0.5 * (loss[:, None] + loss[None, :])
        self.jumps = self._jump_superoperator(basis, gamma1)
        self.n = basis.dim

    @staticmethod
    def _jump_superoperator(basis: SubspaceBasis, gamma1: np.ndarray) -> sp.csr_matrix:
        n = basis.dim
        rows, cols, vals = [], [], []
        for j in range(1, basis.L + 1):
            if gamma1[j - 1] == 0:
                continue
            src = [i for i, p in enumerate(basis.patterns) if j in p]
            dst = [basis.index_of(set(basis.patterns[i]) - {j}) for i in src]
            for a, a2 in zip(src, dst):
                for b, b2 in zip(src, dst):
                    rows.append(a2 * n + b2)
                    cols.append(a * n + b)
                    vals.append(gamma1[j - 1])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n * n, n * n))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = (self.dephasing + self.anticomm) * rho
        if self.jumps.nnz:
            out += (self.jumps @ rho.ravel()).reshape(self.n, self.n)
        return out

    def superoperator(self) -> np.ndarray:
        """Dense n^2 x n^2 matrix acting on row-major vec(rho)."""
        return np.diag((self.dephasing + self.anticomm).ravel()).astype(complex) + self.jumps.toarray()


def _step_sizes(span: float, dt: float) -> tuple[int, float]:
    steps = max(1, int(np.ceil(span / dt - 1e-9)))
    return steps, span / steps


class LindbladPropagator:
    """Propagates rho (optionally with d rho/dh) for fixed model and decoherence."""

    def __init__(self, params: ModelParams, dec: DecoherenceParams, basis: SubspaceBasis,
                 dt: float = DEFAULT_DT, method: str = "lawson"):
        if method not in ("lawson", "rk4"):
            raise ValueError(f"unknown integration method {method!r}")
        self.params, self.basis, self.dt, self.method = params, basis, float(dt), method
        self.H = build_hamiltonian(params, basis)
        self.dH = np.diag(dh_weights(basis))
        self.dh_diag = dh_weights(basis)
        self.D = Dissipator(basis, dec)
        self._flows: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def _flow(self, tau: float) -> tuple[np.ndarray, np.ndarray]:
        key = round(tau, 12)
        if key not in self._flows:
            self._flows[key] = propagator_derivative(self.H, self.dH, tau)
        return self._flows[key]

    def _unitary(self, tau, rho, drho=None):
        U, dU = self._flow(tau)
        Ud = U.conj().T
        out = U @ rho @ Ud
        if drho is None:
            return out, None
        dout = U @ drho @ Ud + dU @ rho @ Ud + U @ rho @ dU.conj().T
        return out, dout

    def _lawson_step(self, tau, rho, drho):
        D = self.D
        half = 0.5 * tau
        with_d = drho is not None
        nd = (lambda x: D(x)) if with_d else (lambda x: None)
        k1, q1 = D(rho), nd(drho)
        a, da = self._unitary(half, rho + half * k1, drho + half * q1 if with_d else None)
        k2, q2 = D(a), nd(da)
        r_half, dr_half = self._unitary(half, rho, drho)
        a = r_half + half * k2
        da = dr_half + half * q2 if with_d else None
        k3, q3 = D(a), nd(da)
        r_full, dr_full = self._unitary(tau, rho, drho)
        m, dm = self._unitary(half, k3, q3)
        a = r_full + tau * m
        da = dr_full + tau * dm if with_d else None
        k4, q4 = D(a), nd(da)
        first, dfirst = self._unitary(tau, rho + tau / 6 * k1, drho + tau / 6 * q1 if with_d else None)
        mid, dmid = self._unitary(half, 2 * k2 + 2 * k3, 2 * q2 + 2 * q3 if with_d else None)
        new = first + tau / 6 * mid + tau / 6 * k4
        dnew = dfirst + tau / 6 * dmid + tau / 6 * q4 if with_d else None
        return new, dnew

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        H = self.H.matrix
        return -1j * PHASE * (H @ rho - rho @ H) + self.D(rho)

    def _rhs_pair(self, rho, drho):
        f = self.rhs(rho)
        if drho is None:
            return f, None
        d = self.dh_diag
        source = -1j * PHASE * (d[:, None] - d[None, :]) * rho
        return f, self.rhs(drho) + source

    def _rk4_step(self, tau, rho, drho):
        with_d = drho is not None

        def add(x, y, c):
            return x + c * y if with_d else None

        k1, q1 = self._rhs_pair(rho, drho)
        k2, q2 = self._rhs_pair(rho + tau / 2 * k1, add(drho, q1, tau / 2))
        k3, q3 = self._rhs_pair(rho + tau / 2 * k2, add(drho, q2, tau / 2))
        k4, q4 = self._rhs_pair(rho + tau * k3, add(drho, q3, tau))
        new = rho + tau / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        dnew = drho + tau / 6 * (q1 + 2 * q2 + 2 * q3 + q4) if with_d else None
        return new, dnew

    def series(self, rho0: DensityMatrix, times: Sequence[float], derivative: bool = False):
        """States at each of ``times`` (nondecreasing, >= 0).

        Returns a list of matrices, or a pair of lists ``(rhos, drhos)`` with
        ``derivative=True``.
        """
        if rho0.basis != self.basis:
            raise ValueError("initial density matrix lives on a different basis")
        times = np.asarray(times, dtype=float)
        if np.any(times < 0) or np.any(np.diff(times) < 0):
            raise ValueError("times must be nonnegative and nondecreasing")
        step = self._lawson_step if self.method == "lawson" else self._rk4_step
        rho = rho0.matrix.astype(complex)
        drho = np.zeros_like(rho) if derivative else None
        now = 0.0
        out, dout = [], []
        for t in times:
            span = t - now
            if span > 0:
                steps, tau = _step_sizes(span, self.dt)
                for _ in range(steps):
                    rho, drho = step(tau, rho, drho)
                now = t
            out.append(rho.copy())
            if derivative:
                dout.append(drho.copy())
        return (out, dout) if derivative else out


def evolve_lindblad(params: ModelParams, dec: DecoherenceParams, rho0: DensityMatrix, t: float,
                    dt: float = DEFAULT_DT, method: str = "lawson") -> DensityMatrix:
    if t < 0:
        raise ValueError("evolution time must be nonnegative")
    prop = LindbladPropagator(params, dec, rho0.basis, dt=dt, method=method)
    return DensityMatrix(rho0.basis, prop.series(rho0, [t])[0])


def liouvillian(params: ModelParams, dec: DecoherenceParams, basis: SubspaceBasis) -> np.ndarray:
    """Dense generator on row-major vec(rho); used as an independent check."""
    H = build_hamiltonian(params, basis).matrix
    eye = np.eye(basis.dim)
    comm = -1j * PHASE * (np.kron(H, eye) - np.kron(eye, H.T))
    return comm + Dissipator(basis, dec).superoperator()


def evolve_lindblad_expm(params: ModelParams, dec: DecoherenceParams, rho0: DensityMatrix, t: float) -> DensityMatrix:
    """rho(t) from the matrix exponential of the full generator."""
    Lv = liouvillian(params, dec, rho0.basis)
    vec = scipy.linalg.expm(Lv * t) @ rho0.matrix.ravel()
    return DensityMatrix(rho0.basis, vec.reshape(rho0.matrix.shape))
