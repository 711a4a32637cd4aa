"""Multi-time Fisher averages, power-law exponents, transition scans and walk fidelity."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .basis import enumerate_basis
from .dynamics import OutcomeDistribution, initial_state, site_populations
from .fisher import closed_fisher_series
from .hamiltonian import ModelParams


class ConvergenceError(RuntimeError):
    """A long-time plateau did not settle within the requested horizon."""


@dataclass(frozen=True, eq=False)
class ScalingSeries:
    t_avg: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_avg, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if t.shape != y.shape or t.ndim != 1:
            raise ValueError("t_avg and y must be 1-d and of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("t_avg must be strictly increasing")
        object.__setattr__(self, "t_avg", t)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class PowerLawFit:
    beta: float
    prefactor: float
    residual_rms: float
    n_points: int


def avg_cfi(times: Sequence[float], cfi: Callable[[np.ndarray], np.ndarray] | Sequence[float]) -> tuple[float, float]:
    """(t_avg, F_avg): mean time and mean of per-time CFIs.

    ``cfi`` is either the per-time values or a callable mapping times to values.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 1:
        raise ValueError("need at least one time point")
    values = np.asarray(cfi(times) if callable(cfi) else cfi, dtype=float)
    if values.shape != times.shape:
        raise ValueError("one CFI value per time is required")
    return float(times.mean()), float(values.mean())


def time_windows(K: int, spacing: float = 5.0, first_center: float = 100.0,
                 horizon: float = 350.0, center_step: float = 5.0) -> list[np.ndarray]:
    """Equally spaced K-point time sets whose centres step by ``center_step``.

    Every time in every window is <= ``horizon``.
    """
    half = spacing * (K - 1) / 2
    offsets = np.arange(K) * spacing - half
    if first_center - half < 0:
        raise ValueError("first window starts before t = 0")
    centers = np.arange(first_center, horizon - half + 1e-9, center_step)
    return [np.round(c + offsets, 9) for c in centers]


def fit_power_law(series: ScalingSeries) -> PowerLawFit:
    """Least-squares line through (log t_avg, log y): y ~ prefactor * t^beta."""
    t, y = series.t_avg, series.y
    if len(t) < 3:
        raise ValueError("need at least 3 points for a power-law fit")
    if np.any(y <= 0) or np.any(t <= 0):
        raise ValueError("power-law fit needs positive t and y")
    x, z = np.log(t), np.log(y)
    A = np.column_stack([x, np.ones_like(x)])
    (beta, logc), *_ = np.linalg.lstsq(A, z, rcond=None)
    resid = z - A @ np.array([beta, logc])
    return PowerLawFit(float(beta), float(np.exp(logc)), float(np.sqrt(np.mean(resid ** 2))), len(t))


def rolling_exponent(series: ScalingSeries, window: float, step: float | None = None) -> list[tuple[float, float]]:
    """Power-law exponent in sliding windows of width ``window`` ns.

    Windows start at the first t_avg and advance by ``step`` (default window/2).
    Returns (window centre, beta) pairs.
    """
    t = series.t_avg
    step = window / 2 if step is None else step
    out = []
    start = t[0]
    while start + window <= t[-1] + 1e-9:
        sel = (t >= start - 1e-9) & (t <= start + window + 1e-9)
        if sel.sum() < 3:
            raise ValueError(f"window of {window} ns holds fewer than 3 points")
        fit = fit_power_law(ScalingSeries(t[sel], series.y[sel]))
        out.append((float(start + window / 2), fit.beta))
        start += step
    if not out:
        raise ValueError("window is longer than the series")
    return out


def cfi_scaling_series(windows: Sequence[np.ndarray], cfi_of_times: Callable[[np.ndarray], np.ndarray]) -> ScalingSeries:
    """Average CFI per window versus the window's mean time."""
    all_times = np.unique(np.concatenate(windows))
    values = dict(zip(all_times, cfi_of_times(all_times)))
    pairs = [avg_cfi(w, [values[t] for t in w]) for w in windows]
    return ScalingSeries(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))


def default_initial_pattern(L: int, k: int) -> tuple[int, ...]:
    """Centre site for one excitation; sites near L/3 and 2L/3 (mirror-symmetric) for two."""
    if k == 1:
        return ((L + 1) // 2,)
    if k == 2:
        j = max(1, int(round(L / 3)))
        return (j, L + 1 - j)
    raise ValueError("default initial patterns exist for k = 1 and k = 2 only")


@dataclass(frozen=True, eq=False)
class TransitionCurve:
    L: int
    k: int
    h_grid: np.ndarray
    plateau: np.ndarray
    converged: np.ndarray
    h_c: float

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def normalized_qfi(params: ModelParams, k: int, pattern, times: np.ndarray) -> np.ndarray:
    basis = enumerate_basis(params.L, k)
    qfi, _ = closed_fisher_series(params, basis, initial_state(basis, pattern), times)
    return qfi / times ** 2


def transition_scan(L_list: Sequence[int], k: int, h_grid: Sequence[float], t_horizon: float = 2000.0,
                    J: float = -8.0, dt: float = 5.0, tail_fraction: float = 0.25,
                    tolerance: float = 0.05, patterns: dict[int, tuple[int, ...]] | None = None,
                    threads: int = 1) -> list[TransitionCurve]:
    """Long-time F_Q / t^2 versus h for each chain length.

    The plateau is the mean over the final ``tail_fraction`` of the horizon;
    it counts as converged when it differs from the mean over the preceding
    block of equal length by less than ``tolerance`` (relative).
    """
    h_grid = np.asarray(h_grid, dtype=float)
    times = np.arange(dt, t_horizon + 1e-9, dt)
    tail = times > t_horizon * (1 - tail_fraction)
    before = (times > t_horizon * (1 - 2 * tail_fraction)) & ~tail
    curves = []
    for L in L_list:
        pattern = (patterns or {}).get(L) or default_initial_pattern(L, k)

        def point(h, L=L, pattern=pattern):
            f = normalized_qfi(ModelParams(L, J, h), k, pattern, times)
            last, prev = f[tail].mean(), f[before].mean()
            return last, abs(last - prev) <= tolerance * abs(last)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(point, h_grid))
        else:
            results = [point(h) for h in h_grid]
        plateau = np.array([r[0] for r in results])
        converged = np.array([r[1] for r in results], dtype=bool)
        curves.append(TransitionCurve(L, k, h_grid, plateau, converged, float(h_grid[np.argmax(plateau)])))
    return curves


def normalized_site_distribution(dist: OutcomeDistribution) -> np.ndarray:
    """Site populations divided by the excitation number, so they sum to 1."""
    pops = site_populations(dist)
    return pops / pops.sum()


def walk_fidelity(p, q) -> float:
    """Bhattacharyya coefficient sum_j sqrt(p_j q_j) of two normalized distributions."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions have different lengths")
    if np.any(p < 0) or np.any(q < 0) or abs(p.sum() - 1) > 1e-9 or abs(q.sum() - 1) > 1e-9:
        raise ValueError("walk_fidelity expects normalized nonnegative distributions")
    return float(min(1.0, np.sum(np.sqrt(p * q))))
