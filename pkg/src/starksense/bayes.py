"""Grid-based Bayesian estimation of the gradient h from count data.

Posteriors live on a strictly monotone grid of candidate h values (MHz).
Counts taken at different evolution times are independent, so per-time
posteriors multiply (after removing the repeated prior).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import find_peaks

from .basis import SubspaceBasis
from .dynamics import initial_state, trajectory
from .hamiltonian import ModelParams, build_hamiltonian
from .lindblad import DecoherenceParams, LindbladPropagator, basis_density, build_sector_basis
from .measurement import CountVector, make_rng, spawn_seeds

REBUILT_FLOOR = 1e-9


def default_h_grid(lo: float = -30.0, hi: float = 0.0, step: float = 0.1) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(n + 1), 10)


class DegeneratePosterior(ValueError):
    """Every grid point has zero posterior mass."""


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PosteriorGrid:
    h_grid: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h_grid, dtype=float)
        m = np.asarray(self.mass, dtype=float)
        if h.ndim != 1 or h.shape != m.shape:
            raise GridMismatch("grid and mass must be 1-d arrays of equal length")
        d = np.diff(h)
        if len(h) > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise GridMismatch("h grid must be strictly monotone")
        if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-12:
            raise ValueError("posterior mass must be nonnegative and sum to 1")
        object.__setattr__(self, "h_grid", h)
        object.__setattr__(self, "mass", m)

    @classmethod
    def uniform(cls, h_grid) -> "PosteriorGrid":
        h = np.asarray(h_grid, dtype=float)
        return cls(h, np.full(len(h), 1.0 / len(h)))

    def mean(self) -> float:
        return float(self.mass @ self.h_grid)


def _normalize_log(logw: np.ndarray, h_grid: np.ndarray) -> PosteriorGrid:
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegeneratePosterior("likelihood vanishes on the whole grid")
    w = np.exp(logw - top)
    return PosteriorGrid(h_grid, w / w.sum())


class LikelihoodModel:
    """Outcome probabilities P(outcome | t, h) tabulated on an h grid.

    ``tables[t]`` has shape (len(h_grid), basis.dim). ``floor`` (if set) is
    applied before taking logarithms.
    """

    def __init__(self, basis: SubspaceBasis, h_grid, tables: dict[float, np.ndarray],
                 source: str, floor: float | None = None):
        self.basis = basis
        self.h_grid = np.asarray(h_grid, dtype=float)
        self.source = source
        self.floor = floor
        self.tables = {}
        for t, tab in tables.items():
            tab = np.asarray(tab, dtype=float)
            if tab.shape != (len(self.h_grid), basis.dim):
                raise GridMismatch(f"table at t={t} has shape {tab.shape}")
            if not np.allclose(tab.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError(f"table at t={t} is not normalized")
            self.tables[float(t)] = tab
        self._logs: dict[float, np.ndarray] = {}

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(sorted(self.tables))

    def probabilities(self, t: float) -> np.ndarray:
        try:
            return self.tables[float(t)]
        except KeyError:
            raise KeyError(f"likelihood model has no table for t={t} ns") from None

    def log_probabilities(self, t: float) -> np.ndarray:
        t = float(t)
        if t not in self._logs:
            p = self.probabilities(t)
            if self.floor is not None:
                p = np.maximum(p, self.floor)
            with np.errstate(divide="ignore"):
                self._logs[t] = np.log(p)
        return self._logs[t]

    @classmethod
    def closed(cls, params: ModelParams, basis: SubspaceBasis, pattern, h_grid, times) -> "LikelihoodModel":
        """Exact closed-system probabilities; ``params.h`` is ignored."""
        tab = closed_probability_table(params, basis, pattern, h_grid, times)
        return cls(basis, h_grid, {t: tab[:, i] for i, t in enumerate(times)}, "closed")

    @classmethod
    def open(cls, params: ModelParams, dec: DecoherenceParams, k: int, pattern, h_grid, times,
             dt: float | None = None) -> "LikelihoodModel":
        """Exact open-system probabilities over the 0..k sector basis."""
        tab, basis = open_probability_table(params, dec, k, pattern, h_grid, times, dt=dt)
        return cls(basis, h_grid, {t: tab[:, i] for i, t in enumerate(times)}, "open")

    @classmethod
    def rebuilt(cls, reference: "LikelihoodModel", shots: int, seed, h_grid=None,
                floor: float = REBUILT_FLOOR) -> "LikelihoodModel":
        """Empirical tables from ``shots`` samples per (t, h) of ``reference``.

        The calibration grid is ``reference.h_grid``; values on ``h_grid`` are
        interpolated linearly per outcome and renormalized.
        """
        rng = make_rng(seed)
        target = reference.h_grid if h_grid is None else np.asarray(h_grid, dtype=float)
        cal = reference.h_grid
        order = np.argsort(cal)
        tables = {}
        for t in reference.times:
            p = reference.probabilities(t)
            counts = np.stack([rng.multinomial(shots, row / row.sum()) for row in p])
            emp = counts / shots
            if target is not cal:
                emp = np.stack([np.interp(target, cal[order], emp[order, j]) for j in range(emp.shape[1])], axis=1)
                emp /= emp.sum(axis=1, keepdims=True)
            tables[t] = emp
        return cls(reference.basis, target, tables, "rebuilt", floor=floor)


def closed_probability_table(params: ModelParams, basis: SubspaceBasis, pattern, h_values, times) -> np.ndarray:
    """|c_n(t, h)|^2 with shape (len(h_values), len(times), dim)."""
    psi0 = initial_state(basis, pattern)
    out = np.empty((len(h_values), len(times), basis.dim))
    for i, h in enumerate(h_values):
        psi, _ = trajectory(build_hamiltonian(params.with_h(h), basis), None, psi0, times)
        p = np.abs(psi) ** 2
        out[i] = p / p.sum(axis=1, keepdims=True)
    return out


def open_probability_table(params: ModelParams, dec: DecoherenceParams, k: int, pattern, h_values, times,
                           dt: float | None = None) -> tuple[np.ndarray, SubspaceBasis]:
    basis = build_sector_basis(params.L, k)
    rho0 = basis_density(basis, pattern)
    order = np.argsort(times)
    kwargs = {} if dt is None else {"dt": dt}
    out = np.empty((len(h_values), len(times), basis.dim))
    for i, h in enumerate(h_values):
        rhos = LindbladPropagator(params.with_h(h), dec, basis, **kwargs).series(rho0, np.asarray(times)[order])
        for slot, r in zip(order, rhos):
            p = np.clip(np.real(np.diag(r)), 0.0, None)
            out[i, slot] = p / p.sum()
    return out, basis


def log_likelihood(counts: CountVector, model: LikelihoodModel, t: float) -> np.ndarray:
    """sum_j n_j log P_j(t, h) for every h on the model grid (constants dropped)."""
    if counts.basis.dim != model.basis.dim:
        raise GridMismatch("counts and likelihood model use different outcome sets")
    logp = model.log_probabilities(t)
    seen = counts.counts > 0
    if not seen.any():
        return np.zeros(len(model.h_grid))
    return logp[:, seen] @ counts.counts[seen]


def posterior(loglik: np.ndarray, prior: PosteriorGrid) -> PosteriorGrid:
    loglik = np.asarray(loglik, dtype=float)
    if loglik.shape != prior.mass.shape:
        raise GridMismatch("likelihood and prior have different lengths")
    with np.errstate(divide="ignore"):
        logw = loglik + np.log(prior.mass)
    return _normalize_log(logw, prior.h_grid)


def combine_posteriors(posteriors: Sequence[PosteriorGrid], prior: PosteriorGrid | None = None) -> PosteriorGrid:
    """Product of posteriors sharing one prior, with the prior counted once."""
    if not posteriors:
        raise ValueError("need at least one posterior")
    grid = posteriors[0].h_grid
    for p in posteriors[1:]:
        if p.h_grid.shape != grid.shape or not np.array_equal(p.h_grid, grid):
            raise GridMismatch("posteriors are defined on different grids")
    prior = PosteriorGrid.uniform(grid) if prior is None else prior
    with np.errstate(divide="ignore"):
        logw = sum(np.log(p.mass) for p in posteriors) - (len(posteriors) - 1) * np.log(prior.mass)
    logw = np.where(prior.mass > 0, logw, -np.inf)
    return _normalize_log(logw, grid)


def map_estimate(post: PosteriorGrid) -> float:
    """Grid point of maximum mass; ties go to the smallest |h|, then the smaller h."""
    top = post.mass.max()
    ties = np.flatnonzero(post.mass >= top * (1 - 1e-12))
    h = post.h_grid[ties]
    return float(min(h, key=lambda x: (abs(x), x)))


def count_modes(post: PosteriorGrid, rel_height: float = 0.01) -> int:
    """Interior local maxima above rel_height * peak (at least 1).

    Grid endpoints are not counted: a rising edge there is truncated support,
    not a separate mode.
    """
    m = post.mass
    peaks, _ = find_peaks(m, height=rel_height * m.max())
    return max(1, len(peaks))


@dataclass(frozen=True, eq=False)
class EstimationProtocol:
    """Shots split over evolution times, with data drawn from ``truth``.

    ``truth`` has shape (len(times), model.basis.dim) and holds the data
    distribution at the true field for each time.
    """

    model: LikelihoodModel
    times: tuple[float, ...]
    shots: tuple[int, ...]
    true_h: float
    truth: np.ndarray
    prior: PosteriorGrid | None = None

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "shots", tuple(int(m) for m in self.shots))
        if len(self.times) != len(self.shots):
            raise ValueError("one shot count per time is required")
        if np.asarray(self.truth).shape != (len(self.times), self.model.basis.dim):
            raise GridMismatch("truth table does not match times/outcomes")

    @property
    def total_shots(self) -> int:
        return sum(self.shots)


def closed_protocol(params: ModelParams, basis: SubspaceBasis, pattern, true_h: float, times: Iterable[float],
                    shots: Iterable[int], model: LikelihoodModel) -> EstimationProtocol:
    times = tuple(times)
    truth = closed_probability_table(params, basis, pattern, [true_h], times)[0]
    return EstimationProtocol(model, times, tuple(shots), float(true_h), truth)


def split_shots(M: int, K: int) -> tuple[int, ...]:
    """M shots over K times as evenly as possible (earlier times get the remainder)."""
    base, extra = divmod(M, K)
    return tuple(base + (1 if i < extra else 0) for i in range(K))


@dataclass(frozen=True)
class EstimateRun:
    h_est: float
    combined: PosteriorGrid
    per_time: tuple[PosteriorGrid, ...]


def run_estimate(protocol: EstimationProtocol, seed) -> EstimateRun:
    rng = make_rng(seed)
    prior = protocol.prior or PosteriorGrid.uniform(protocol.model.h_grid)
    singles = []
    for t, M, p in zip(protocol.times, protocol.shots, protocol.truth):
        counts = CountVector(protocol.model.basis, rng.multinomial(M, p / p.sum()))
        singles.append(posterior(log_likelihood(counts, protocol.model, t), prior))
    combined = combine_posteriors(singles, prior)
    return EstimateRun(map_estimate(combined), combined, tuple(singles))


@dataclass(frozen=True)
class TrialStatistics:
    mean: float
    sd: float
    variance: float
    estimates: np.ndarray = field(repr=False)
    seed: int
    repetitions: int

    @property
    def variance_se(self) -> float:
        """Distribution-free standard error of the sample variance (uses the 4th central moment)."""
        return variance_standard_error(self.estimates)


def variance_standard_error(x) -> float:
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        raise ValueError("need at least four samples")
    d = x - x.mean()
    s2 = d @ d / (n - 1)
    m4 = np.mean(d ** 4)
    return float(np.sqrt(max(m4 - (n - 3) / (n - 1) * s2 ** 2, 0.0) / n))


def trial_statistics(protocol: EstimationProtocol, R: int, seed: int, threads: int = 1) -> TrialStatistics:
    """Repeat sample -> posterior -> MAP R times on independent child streams."""
    if R < 2:
        raise ValueError("need at least two repetitions")
    children = spawn_seeds(seed, R)

    def one(child):
        return run_estimate(protocol, child).h_est

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            est = np.array(list(pool.map(one, children)))
    else:
        est = np.array([one(c) for c in children])
    var = float(np.var(est, ddof=1))
    return TrialStatistics(float(est.mean()), float(np.sqrt(var)), var, est, int(seed), R)
