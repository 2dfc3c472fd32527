"""Optical-pumping transients: closed form vs ODE oracle, integration, fitting."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from atomcount.calib import (
    CalibFit,
    PumpTransient,
    atoms_from_asymptote,
    cumulative_scattered,
    fit_transient,
    od_solution,
    synthesize_transient,
    transmission_model,
)

N_REF = 1606.0
ALPHA_REF = 0.0164
FLUX_REF = 2.145e7  # photons/s at 5.0 pW
K_REF = 2.4


def _times(duration: float = 4e-4, n: int = 2000) -> np.ndarray:
    return np.linspace(0.0, duration, n)


def test_transmission_at_zero_is_lambert_beer():
    t0 = transmission_model(N_REF, ALPHA_REF, FLUX_REF, K_REF, 0.0)
    assert t0 == pytest.approx(math.exp(-ALPHA_REF * N_REF), rel=1e-12)


def test_transmission_bleaches_to_unity():
    assert transmission_model(N_REF, ALPHA_REF, FLUX_REF, K_REF, 10.0) == pytest.approx(
        1.0, abs=1e-12
    )


def test_transmission_midpoint_property():
    # T = 1/2 when alpha*flux*t/k equals alpha*N (for alpha*N >> 1)
    t_mid = ALPHA_REF * N_REF * K_REF / (ALPHA_REF * FLUX_REF)
    assert transmission_model(N_REF, ALPHA_REF, FLUX_REF, K_REF, t_mid) == pytest.approx(
        0.5, abs=1e-9
    )


def test_transmission_monotone_increasing():
    values = transmission_model(N_REF, ALPHA_REF, FLUX_REF, K_REF, _times())
    assert np.all(np.diff(values) > 0)


def test_transmission_log_domain_guard():
    # alpha*N = 800 would overflow exp; the log-domain path must stay finite
    value = transmission_model(50000.0, 0.016, 1e8, 2.4, 0.0)
    assert value == pytest.approx(0.0, abs=1e-300)
    assert np.isfinite(transmission_model(50000.0, 0.016, 1e8, 2.4, 1.0))


def test_od_solution_boundaries():
    d0 = ALPHA_REF * N_REF
    assert od_solution(d0, ALPHA_REF, FLUX_REF, K_REF, 0.0) == pytest.approx(d0, rel=1e-12)
    assert od_solution(d0, ALPHA_REF, FLUX_REF, K_REF, 100.0) == pytest.approx(0.0, abs=1e-12)


def test_od_solution_matches_transmission_exactly():
    times = _times()
    d = od_solution(ALPHA_REF * N_REF, ALPHA_REF, FLUX_REF, K_REF, times)
    t = transmission_model(N_REF, ALPHA_REF, FLUX_REF, K_REF, times)
    assert np.max(np.abs(np.exp(-d) - t)) < 1e-12
    assert np.all(np.diff(d) < 0)


def test_od_solution_against_ode_oracle():
    # Numerically integrate d' = -(alpha/k) flux (1 - e^(-d)) and compare
    d0 = ALPHA_REF * N_REF

    def rhs(_t, d):
        return -(ALPHA_REF / K_REF) * FLUX_REF * (1.0 - np.exp(-d))

    times = np.linspace(0.0, 4e-4, 100)
    sol = solve_ivp(rhs, (0.0, times[-1]), [d0], t_eval=times, rtol=1e-11, atol=1e-13)
    closed = od_solution(d0, ALPHA_REF, FLUX_REF, K_REF, times)
    assert np.max(np.abs(sol.y[0] - closed)) < 1e-8


def test_cumulative_scattered_zero_for_full_transmission():
    transient = PumpTransient(_times(), np.ones(2000), FLUX_REF, K_REF)
    assert np.all(cumulative_scattered(transient) == 0.0)


def test_cumulative_scattered_asymptote():
    times = _times(6e-4, 6000)
    transient = synthesize_transient(N_REF, ALPHA_REF, FLUX_REF, times)
    curve = cumulative_scattered(transient)
    assert transient.transmission[-1] > 0.999
    assert curve[-1] == pytest.approx(K_REF * N_REF, rel=5e-3)
    assert K_REF * N_REF == pytest.approx(3854.4, rel=1e-4)


def test_cumulative_scattered_linear_in_atoms():
    times = _times(1.2e-3, 6000)
    full = cumulative_scattered(synthesize_transient(N_REF, ALPHA_REF, FLUX_REF, times))
    half = cumulative_scattered(synthesize_transient(N_REF / 2, ALPHA_REF, FLUX_REF, times))
    assert half[-1] == pytest.approx(full[-1] / 2, rel=5e-3)


def test_atoms_from_asymptote():
    assert atoms_from_asymptote(0.0, 2.4) == 0.0
    assert atoms_from_asymptote(3854.4, 2.4) == pytest.approx(1606.0, rel=1e-12)
    assert atoms_from_asymptote(2.4, 2.4) == 1.0


def test_fit_recovers_noiseless_parameters():
    times = _times()
    data = synthesize_transient(N_REF, ALPHA_REF, FLUX_REF, times)
    fit = fit_transient(data)
    assert fit.converged
    assert fit.n_atoms == pytest.approx(N_REF, rel=1e-6)
    assert fit.alpha_at == pytest.approx(ALPHA_REF, rel=1e-6)
    assert fit.sys_band_n == pytest.approx(0.10 * fit.n_atoms, rel=1e-12)


def test_fit_recovers_from_averaged_noise():
    # 1% single-trace noise averaged over 200 traces
    rng = np.random.default_rng(21)
    times = _times()
    data = synthesize_transient(
        N_REF, ALPHA_REF, FLUX_REF, times, noise_std=0.01, n_average=200, rng=rng
    )
    fit = fit_transient(data)
    assert fit.converged
    assert fit.n_atoms == pytest.approx(N_REF, rel=5e-3)
    assert fit.stat_err_n < 0.005 * N_REF


def test_fit_estimator_unbiased_for_atom_number():
    # |bias| < 0.2 * std over repeated noisy fits
    rng = np.random.default_rng(22)
    times = _times(4e-4, 60)
    estimates = np.empty(500)
    for i in range(500):
        data = synthesize_transient(
            N_REF, ALPHA_REF, FLUX_REF, times, noise_std=0.01, n_average=50, rng=rng
        )
        estimates[i] = fit_transient(data).n_atoms
    bias = estimates.mean() - N_REF
    assert abs(bias) < 0.2 * estimates.std(ddof=1)


def test_fit_average_vs_individual_alpha_bias():
    # Run-to-run atom-number spread softens the averaged trace: alpha from the
    # averaged fit drops below the mean of per-trace alphas; N stays unbiased.
    rng = np.random.default_rng(23)
    times = _times(6e-4, 300)
    n_traces = 200
    traces = []
    alphas = []
    for _ in range(n_traces):
        n_i = N_REF * (1.0 + rng.normal(0.0, 0.05))
        trace = synthesize_transient(
            n_i, ALPHA_REF, FLUX_REF, times, noise_std=0.005, n_average=1, rng=rng
        )
        traces.append(trace.transmission)
        alphas.append(fit_transient(trace).alpha_at)
    averaged = PumpTransient(times, np.mean(traces, axis=0), FLUX_REF, K_REF)
    fit_avg = fit_transient(averaged)
    mean_alpha = float(np.mean(alphas))
    assert fit_avg.alpha_at < mean_alpha
    assert abs(fit_avg.alpha_at - mean_alpha) > 3 * fit_avg.stat_err_alpha
    assert fit_avg.n_atoms == pytest.approx(N_REF, rel=0.01)


def test_fit_rejects_flat_data():
    times = _times(4e-4, 50)
    data = PumpTransient(times, np.full(50, 0.5), FLUX_REF, K_REF)
    with pytest.raises(ValueError, match="flat"):
        fit_transient(data)


def test_fit_rejects_short_data():
    times = _times(4e-4, 10)
    data = synthesize_transient(N_REF, ALPHA_REF, FLUX_REF, times)
    with pytest.raises(ValueError, match="20"):
        fit_transient(data)


def test_fit_flags_non_convergence():
    times = _times()
    data = synthesize_transient(N_REF, ALPHA_REF, FLUX_REF, times)
    fit = fit_transient(data, max_nfev=2)
    assert isinstance(fit, CalibFit)
    assert not fit.converged


def test_transient_container_validation():
    with pytest.raises(ValueError):
        PumpTransient(np.array([0.0, 0.0, 1.0]), np.zeros(3), FLUX_REF, K_REF)
    with pytest.raises(ValueError):
        PumpTransient(np.array([0.0, 1.0]), np.zeros(2), FLUX_REF, k_branch=1.0)
    with pytest.raises(ValueError):
        PumpTransient(np.array([0.0, 1.0]), np.zeros(2), input_flux=0.0)
