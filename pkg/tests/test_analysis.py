import numpy as np
import pytest
from hypothesis import given, strategies as st

from starksense.analysis import (ScalingSeries, avg_cfi, cfi_scaling_series, default_initial_pattern, fit_power_law,
                                 normalized_qfi, normalized_site_distribution, rolling_exponent, time_windows,
                                 transition_scan, walk_fidelity)
from starksense.basis import enumerate_basis
from starksense.dynamics import OutcomeDistribution
from starksense.hamiltonian import ModelParams


def test_avg_cfi_rules():
    assert avg_cfi([100.0], [3.5]) == (100.0, 3.5)
    times = np.array([90.0, 95.0, 100.0, 105.0, 110.0])
    t_avg, f = avg_cfi(times, np.array([1.0, 2, 3, 4, 5]))
    assert t_avg == times[2] and f == 3.0
    assert 5 * f == 15.0
    t_avg2, f2 = avg_cfi(times, lambda t: t ** 2)
    assert f2 == np.mean(times ** 2)
    with pytest.raises(ValueError):
        avg_cfi([], [])
    with pytest.raises(ValueError):
        avg_cfi([1.0, 2.0], [1.0])


def test_avg_cfi_composes_as_weighted_mean():
    a, b = np.array([10.0, 20.0]), np.array([30.0, 40.0, 50.0])
    fa, fb = np.array([1.0, 3.0]), np.array([2.0, 2.0, 5.0])
    _, whole = avg_cfi(np.concatenate([a, b]), np.concatenate([fa, fb]))
    assert abs(whole - (2 * avg_cfi(a, fa)[1] + 3 * avg_cfi(b, fb)[1]) / 5) < 1e-15


def test_time_windows():
    w5 = time_windows(5)
    assert list(w5[0]) == [90.0, 95.0, 100.0, 105.0, 110.0]
    assert all(w.max() <= 350 for w in w5) and w5[-1].max() == 350.0
    w7 = time_windows(7)
    assert w7[0][3] == 100.0 and len(w7[0]) == 7
    with pytest.raises(ValueError):
        time_windows(5, first_center=5.0)


@given(st.floats(0.1, 100), st.floats(-3, 3))
def test_power_law_exact(c, beta):
    t = np.linspace(50, 350, 13)
    fit = fit_power_law(ScalingSeries(t, c * t ** beta))
    assert abs(fit.beta - beta) < 1e-9
    assert abs(fit.prefactor / c - 1) < 1e-8


def test_power_law_errors():
    with pytest.raises(ValueError):
        fit_power_law(ScalingSeries([1.0, 2.0], [1.0, 2.0]))
    with pytest.raises(ValueError):
        fit_power_law(ScalingSeries([1.0, 2.0, 3.0], [1.0, -2.0, 3.0]))
    with pytest.raises(ValueError):
        ScalingSeries([2.0, 1.0, 3.0], [1.0, 1.0, 1.0])


def test_rolling_exponent():
    t = np.arange(100.0, 1001.0, 5.0)
    s = ScalingSeries(t, 3 * t ** 2)
    assert all(abs(b - 2) < 1e-9 for _, b in rolling_exponent(s, 200.0))
    full = rolling_exponent(s, t[-1] - t[0])
    assert len(full) == 1 and abs(full[0][1] - fit_power_law(s).beta) < 1e-12
    with pytest.raises(ValueError):
        rolling_exponent(s, 5.0)
    with pytest.raises(ValueError):
        rolling_exponent(s, 5000.0)


def test_cfi_scaling_series_uses_window_means():
    windows = time_windows(5, horizon=150)
    s = cfi_scaling_series(windows, lambda t: t ** 2)
    np.testing.assert_allclose(s.t_avg, [w.mean() for w in windows])
    np.testing.assert_allclose(s.y, [np.mean(w ** 2) for w in windows])


def test_default_patterns():
    assert default_initial_pattern(9, 1) == (5,)
    assert default_initial_pattern(9, 2) == (3, 7)
    assert default_initial_pattern(5, 2) == (2, 4)
    with pytest.raises(ValueError):
        default_initial_pattern(9, 3)


@pytest.fixture(scope="module")
def l9_curves():
    single = transition_scan([9], 1, np.arange(-30.0, 0.5, 1.0))[0]
    double = transition_scan([9], 2, np.arange(-30.0, 0.5, 1.0))[0]
    return single, double


def test_transition_points(l9_curves):
    single, double = l9_curves
    assert abs(single.h_c + 6) <= 1
    assert abs(double.h_c + 5) <= 1
    i30 = 0
    assert single.plateau[i30] < 0.1 * single.plateau.max()
    assert double.plateau[i30] < 0.1 * double.plateau.max()
    assert single.converged[np.argmax(single.plateau)] and double.converged[np.argmax(double.plateau)]


def test_transition_peak_stable_under_shorter_window(l9_curves):
    single, _ = l9_curves
    half = transition_scan([9], 1, single.h_grid, tail_fraction=0.125)[0]
    assert abs(half.h_c - single.h_c) <= 1.0


def test_transition_threads_match_serial():
    grid = np.arange(-8.0, -3.5, 1.0)
    a = transition_scan([7], 1, grid, t_horizon=500)[0]
    b = transition_scan([7], 1, grid, t_horizon=500, threads=3)[0]
    np.testing.assert_array_equal(a.plateau, b.plateau)


def test_normalized_qfi_positive():
    f = normalized_qfi(ModelParams(5, -8, -3), 1, (3,), np.array([10.0, 20.0]))
    assert np.all(f > 0)


def test_walk_fidelity():
    p = np.array([0.2, 0.3, 0.5])
    assert walk_fidelity(p, p) == pytest.approx(1.0)
    assert walk_fidelity([1, 0], [0, 1]) == 0.0
    assert walk_fidelity([0.5, 0.5], [1, 0]) == pytest.approx(np.sqrt(0.5))
    q = np.array([0.1, 0.6, 0.3])
    assert walk_fidelity(p, q) == walk_fidelity(q, p) < 1
    with pytest.raises(ValueError):
        walk_fidelity([0.5, 0.5], [1.0, 0, 0])
    with pytest.raises(ValueError):
        walk_fidelity([0.5, 0.6], [0.5, 0.5])


def test_normalized_site_distribution_double_excitation():
    b = enumerate_basis(9, 2)
    p = np.zeros(36)
    p[b.index_of({3, 7})] = 1
    d = normalized_site_distribution(OutcomeDistribution(b, p))
    assert d[2] == d[6] == 0.5 and abs(d.sum() - 1) < 1e-15
