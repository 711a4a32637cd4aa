"""Excitation-number subspaces of an L-site hard-core chain.

Sites are numbered 1..L in patterns; storage indices are 0-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Iterable

import numpy as np

Pattern = tuple[int, ...]


class BasisError(ValueError):
    """Invalid basis dimensions or a pattern that is not part of the basis."""


def _normalize(pattern: Iterable[int]) -> Pattern:
    return tuple(sorted(int(j) for j in pattern))


@dataclass(frozen=True)
class SubspaceBasis:
    """Lexicographically ordered k-excitation patterns on L sites.

    With ``sector=True`` the patterns span every excitation number 0..k
    instead (see :func:`sector_basis`).
    """

    L: int
    k: int
    patterns: tuple[Pattern, ...]
    sector: bool = False
    _index: dict[Pattern, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {p: i for i, p in enumerate(self.patterns)})

    def __len__(self) -> int:
        return len(self.patterns)

    @property
    def dim(self) -> int:
        return len(self.patterns)

    def index_of(self, pattern: Iterable[int]) -> int:
        key = _normalize(pattern)
        try:
            return self._index[key]
        except KeyError:
            raise BasisError(f"pattern {set(key) or '{}'} is not in this basis") from None

    def occupation_of(self, i: int) -> Pattern:
        return self.patterns[i]

    @cached_property
    def occupations(self) -> np.ndarray:
        """(dim, L) 0/1 matrix; row i marks the occupied sites of pattern i."""
        occ = np.zeros((self.dim, self.L), dtype=np.int8)
        for i, p in enumerate(self.patterns):
            for j in p:
                occ[i, j - 1] = 1
        occ.setflags(write=False)
        return occ

    @cached_property
    def excitation_numbers(self) -> np.ndarray:
        return self.occupations.sum(axis=1)


def enumerate_basis(L: int, k: int) -> SubspaceBasis:
    """All binomial(L, k) patterns with k excitations, in lexicographic order."""
    if L < 1 or k < 0 or k > L:
        raise BasisError(f"invalid subspace dimensions L={L}, k={k}")
    patterns = tuple(itertools.combinations(range(1, L + 1), k))
    assert len(patterns) == comb(L, k)
    return SubspaceBasis(L, k, patterns)


def sector_basis(L: int, k_max: int) -> SubspaceBasis:
    """Concatenation of the 0..k_max excitation subspaces (sector by sector).

    ``excitation_numbers`` gives the sector of each entry.
    """
    if L < 1 or k_max < 0 or k_max > L:
        raise BasisError(f"invalid sector dimensions L={L}, k_max={k_max}")
    patterns = tuple(p for m in range(k_max + 1) for p in enumerate_basis(L, m).patterns)
    return SubspaceBasis(L, k_max, patterns, sector=True)


def index_of(basis: SubspaceBasis, pattern: Iterable[int]) -> int:
    return basis.index_of(pattern)
