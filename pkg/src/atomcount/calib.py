"""Absolute atom-number calibration from optical-pumping transmission transients.

A resonant probe pumps atoms into a dark ground state; the sample bleaches
and its transmission rises along a logistic-in-log curve fixed by the atom
number, the per-atom optical depth, the input photon flux and the pumping
branching factor.  Fitting that curve, or integrating the scattered-photon
flux to its asymptote, yields the absolute atom number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import least_squares
from scipy.special import expit

# Mean scattering events to pump one atom into the dark state, from the
# 7/12 : 5/12 partial decay rates of the intermediate level.
DEFAULT_BRANCH_EVENTS = 2.4

# Fractional systematic uncertainty of the input-flux scale (quantum
# efficiency calibration); propagated to N as a multiplicative band.
FLUX_SCALE_UNCERTAINTY = 0.10

_LOG_EXPM1_SWITCH = 30.0


@dataclass
class PumpTransient:
    """Measured or synthetic transmission versus time during optical pumping."""

    times_s: np.ndarray
    transmission: np.ndarray
    input_flux: float
    k_branch: float = DEFAULT_BRANCH_EVENTS

    def __post_init__(self) -> None:
        self.times_s = np.asarray(self.times_s, dtype=float)
        self.transmission = np.asarray(self.transmission, dtype=float)
        if self.times_s.shape != self.transmission.shape:
            raise ValueError("times_s and transmission must have the same shape")
        if np.any(np.diff(self.times_s) <= 0):
            raise ValueError("times_s must be strictly increasing")
        if self.input_flux <= 0:
            raise ValueError("input_flux must be > 0")
        if self.k_branch <= 1:
            raise ValueError("k_branch must be > 1")


@dataclass
class CalibFit:
    """Result of a transient fit: atom number and per-atom optical depth."""

    n_atoms: float
    alpha_at: float
    stat_err_n: float
    stat_err_alpha: float
    sys_band_n: float
    residual_norm: float
    converged: bool


def _log_expm1(x: float) -> float:
    """log(e^x - 1) for x > 0, stable for large x."""
    if x <= 0:
        raise ValueError("argument must be > 0")
    if x > _LOG_EXPM1_SWITCH:
        return x + math.log1p(-math.exp(-x))
    return math.log(math.expm1(x))


def transmission_model(
    n_atoms: float,
    alpha_at: float,
    flux: float,
    k_branch: float,
    t_s: float | np.ndarray,
) -> float | np.ndarray:
    """Sample transmission T(t) = 1 / (1 + (e^(a N) - 1) e^(-a F t / k)).

    Evaluated through the log domain so that optical depths of several
    hundred do not overflow; T(0) reduces exactly to e^(-a N) and T -> 1
    as the sample bleaches.
    """
    if n_atoms <= 0 or alpha_at <= 0 or flux <= 0 or k_branch <= 0:
        raise ValueError("all model parameters must be > 0")
    log_amp = _log_expm1(alpha_at * n_atoms)
    arg = log_amp - alpha_at * flux * np.asarray(t_s, dtype=float) / k_branch
    out = expit(-arg)
    return float(out) if np.isscalar(t_s) else out


def od_solution(
    d0_initial: float,
    alpha_at: float,
    flux: float,
    k_branch: float,
    t_s: float | np.ndarray,
) -> float | np.ndarray:
    """Optical depth d(t) = ln(1 + (e^(d0) - 1) e^(-a F t / k)).

    Closed-form solution of the bleaching rate equation for constant input
    flux; exp(-d(t)) coincides with transmission_model to machine precision.
    """
    if d0_initial <= 0 or alpha_at <= 0 or flux <= 0 or k_branch <= 0:
        raise ValueError("all parameters must be > 0")
    arg = _log_expm1(d0_initial) - alpha_at * flux * np.asarray(t_s, dtype=float) / k_branch
    out = np.logaddexp(0.0, arg)
    return float(out) if np.isscalar(t_s) else out


def cumulative_scattered(transient: PumpTransient) -> np.ndarray:
    """Cumulative scattered photons: trapezoidal integral of flux * (1 - T).

    For the noiseless model the curve approaches k_branch * N once the
    sample is fully bleached.
    """
    absorbed_flux = transient.input_flux * (1.0 - transient.transmission)
    return cumulative_trapezoid(absorbed_flux, transient.times_s, initial=0.0)


def atoms_from_asymptote(total_scattered: float, k_branch: float) -> float:
    """Atom number from the scattered-photon asymptote: total / k_branch."""
    if total_scattered < 0:
        raise ValueError("total_scattered must be >= 0")
    if k_branch <= 0:
        raise ValueError("k_branch must be > 0")
    return total_scattered / k_branch


def synthesize_transient(
    n_atoms: float,
    alpha_at: float,
    flux: float,
    times_s: np.ndarray,
    k_branch: float = DEFAULT_BRANCH_EVENTS,
    noise_std: float = 0.0,
    n_average: int = 1,
    rng: np.random.Generator | None = None,
) -> PumpTransient:
    """Model transient with additive Gaussian transmission noise.

    ``noise_std`` is the single-trace noise; averaging ``n_average`` traces
    scales it down by sqrt(n_average), matching how measured transients are
    accumulated before fitting.
    """
    t = np.asarray(times_s, dtype=float)
    trans = transmission_model(n_atoms, alpha_at, flux, k_branch, t)
    if noise_std > 0:
        if rng is None:
            rng = np.random.default_rng()
        trans = trans + rng.normal(0.0, noise_std / math.sqrt(n_average), len(t))
    return PumpTransient(times_s=t, transmission=trans, input_flux=flux, k_branch=k_branch)


def fit_transient(
    data: PumpTransient,
    k_branch: float | None = None,
    flux: float | None = None,
    max_nfev: int = 200,
) -> CalibFit:
    """Damped least-squares fit of the transmission model over (N, alpha).

    Starting values come from the data itself: N from the integrated
    scattered-photon asymptote, alpha from the initial transmission.
    Parameter standard errors follow from the residual covariance; the
    systematic band on N reflects the input-flux scale uncertainty and is
    reported alongside, not folded into the fit.  Residual weights are
    uniform.  Non-convergence returns the last iterate flagged
    ``converged=False``; degenerate (flat) data raises.
    """
    k = data.k_branch if k_branch is None else k_branch
    phi = data.input_flux if flux is None else flux
    t = data.times_s
    trans = data.transmission
    if len(t) < 20:
        raise ValueError("need at least 20 points to fit a transient")
    if float(np.ptp(trans)) < 0.1:
        raise ValueError("transmission is flat; transient carries no signal")

    total_scattered = float(cumulative_scattered(data)[-1])
    n0 = max(atoms_from_asymptote(total_scattered, k), 1.0)
    t0 = float(np.clip(trans[0], 1e-9, 1.0 - 1e-9))
    alpha0 = max(-math.log(t0) / n0, 1e-6)

    def residuals(params: np.ndarray) -> np.ndarray:
        n, alpha = params
        return transmission_model(n, alpha, phi, k, t) - trans

    result = least_squares(
        residuals,
        x0=[n0, alpha0],
        bounds=([1e-6, 1e-9], [np.inf, np.inf]),
        method="trf",
        max_nfev=max_nfev,
    )

    n_fit, alpha_fit = result.x
    dof = max(len(t) - 2, 1)
    s2 = float(result.fun @ result.fun) / dof
    jtj = result.jac.T @ result.jac
    try:
        cov = s2 * np.linalg.inv(jtj)
        err_n, err_alpha = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        err_n = err_alpha = math.nan

    return CalibFit(
        n_atoms=float(n_fit),
        alpha_at=float(alpha_fit),
        stat_err_n=float(err_n),
        stat_err_alpha=float(err_alpha),
        sys_band_n=FLUX_SCALE_UNCERTAINTY * float(n_fit),
        residual_norm=math.sqrt(float(result.fun @ result.fun)),
        converged=bool(result.success and result.status > 0),
    )
