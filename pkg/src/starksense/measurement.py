"""Finite-shot acquisition and per-qubit readout error.

Readout matrix for qubit j acts on the column (P0, P1):

    [[F0_j, 1 - F1_j],
     [1 - F0_j, F1_j]]

Bitstring index convention for full-register distributions: qubit 1 is the
most significant bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import SubspaceBasis
from .dynamics import OutcomeDistribution

DEVICE_F0 = (0.952, 0.972, 0.938, 0.956, 0.967, 0.987, 0.959, 0.968, 0.948)
DEVICE_F1 = (0.901, 0.910, 0.875, 0.898, 0.903, 0.895, 0.904, 0.888, 0.912)


class SingularReadout(ValueError):
    pass


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an int seed, SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(root_seed: int, n: int) -> list[np.random.SeedSequence]:
    """Independent child streams; child i depends only on (root_seed, i)."""
    return np.random.SeedSequence(root_seed).spawn(n)


def derive_seed(root_seed: int, *key: int) -> int:
    """Deterministic 63-bit seed for the stream labelled ``key`` under ``root_seed``."""
    ss = np.random.SeedSequence(root_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True, eq=False)
class CountVector:
    basis: SubspaceBasis
    counts: np.ndarray
    seed: int | None = field(default=None)

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (self.basis.dim,) or np.any(c < 0):
            raise ValueError("counts must be a nonnegative vector over the basis")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def sample_counts(dist: OutcomeDistribution, M: int, seed=None) -> CountVector:
    if M < 0:
        raise ValueError("sample size must be nonnegative")
    p = np.asarray(dist.probabilities, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ValueError("invalid outcome distribution")
    rng = make_rng(seed)
    # multinomial needs sum(p[:-1]) <= 1 exactly
    counts = rng.multinomial(M, p / p.sum())
    return CountVector(dist.basis, counts, seed if isinstance(seed, (int, np.integer)) else None)


def empirical_distribution(counts: CountVector) -> OutcomeDistribution:
    if counts.total == 0:
        raise ValueError("cannot normalize an empty count vector")
    return OutcomeDistribution(counts.basis, counts.counts / counts.total)


@dataclass(frozen=True)
class ReadoutFidelities:
    F0: tuple[float, ...]
    F1: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "F0", tuple(float(x) for x in self.F0))
        object.__setattr__(self, "F1", tuple(float(x) for x in self.F1))
        if len(self.F0) != len(self.F1):
            raise ValueError("F0 and F1 tables must have the same length")
        if any(not 0 <= f <= 1 for f in self.F0 + self.F1):
            raise ValueError("readout fidelities must lie in [0, 1]")

    @property
    def L(self) -> int:
        return len(self.F0)

    @classmethod
    def device(cls) -> "ReadoutFidelities":
        return cls(DEVICE_F0, DEVICE_F1)

    @classmethod
    def perfect(cls, L: int) -> "ReadoutFidelities":
        return cls((1.0,) * L, (1.0,) * L)


def readout_matrix(fid: ReadoutFidelities, j: int) -> np.ndarray:
    """Column-stochastic confusion matrix of qubit j (1-based)."""
    f0, f1 = fid.F0[j - 1], fid.F1[j - 1]
    return np.array([[f0, 1 - f1], [1 - f0, f1]])


def apply_readout_error(p_true, fid: ReadoutFidelities, j: int) -> np.ndarray:
    return readout_matrix(fid, j) @ np.asarray(p_true, dtype=float)


def correct_readout(p_obs, fid: ReadoutFidelities, j: int, clip: bool = True) -> np.ndarray:
    """Invert qubit j's confusion matrix; optionally clip negatives and renormalize."""
    f0, f1 = fid.F0[j - 1], fid.F1[j - 1]
    if f0 + f1 <= 1:
        raise SingularReadout(f"qubit {j}: F0 + F1 = {f0 + f1} <= 1, matrix not invertible")
    raw = np.linalg.solve(readout_matrix(fid, j), np.asarray(p_obs, dtype=float))
    return _clip(raw) if clip else raw


def _clip(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def correct_site_populations(populations, fid: ReadoutFidelities, clip: bool = True) -> np.ndarray:
    """Per-qubit correction of observed excited-state populations P1_j."""
    pops = np.asarray(populations, dtype=float)
    out = np.empty_like(pops)
    for j in range(1, len(pops) + 1):
        p1 = pops[j - 1]
        out[j - 1] = correct_readout([1 - p1, p1], fid, j, clip=clip)[1]
    return out


def bitstring_index(pattern, L: int) -> int:
    return sum(1 << (L - j) for j in pattern)


def embed_distribution(dist: OutcomeDistribution) -> np.ndarray:
    """Subspace distribution as a length-2^L register distribution."""
    L = dist.basis.L
    full = np.zeros(2 ** L)
    for p, pattern in zip(dist.probabilities, dist.basis.patterns):
        full[bitstring_index(pattern, L)] += p
    return full


def _per_qubit(full: np.ndarray, mats) -> np.ndarray:
    L = len(mats)
    t = np.asarray(full, dtype=float).reshape((2,) * L)
    for axis, m in enumerate(mats):
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [axis])), 0, axis)
    return t.reshape(-1)


def apply_readout_error_full(full: np.ndarray, fid: ReadoutFidelities) -> np.ndarray:
    """Independent per-qubit readout channel on a 2^L register distribution."""
    return _per_qubit(full, [readout_matrix(fid, j) for j in range(1, fid.L + 1)])


def correct_readout_full(observed: np.ndarray, fid: ReadoutFidelities, clip: bool = True) -> np.ndarray:
    for j in range(1, fid.L + 1):
        if fid.F0[j - 1] + fid.F1[j - 1] <= 1:
            raise SingularReadout(f"qubit {j} readout matrix is not invertible")
    inv = [np.linalg.inv(readout_matrix(fid, j)) for j in range(1, fid.L + 1)]
    raw = _per_qubit(observed, inv)
    return _clip(raw) if clip else raw


def restrict_to_basis(full: np.ndarray, basis: SubspaceBasis) -> OutcomeDistribution:
    """Post-select a register distribution onto the patterns of ``basis``."""
    p = np.array([full[bitstring_index(pat, basis.L)] for pat in basis.patterns])
    if p.sum() <= 0:
        raise ValueError("no probability mass inside the basis")
    return OutcomeDistribution(basis, p / p.sum())
