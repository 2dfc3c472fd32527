"""Closed-form measurement budget: estimator variance, optimal probing strength,
minimum Fano factor and the metrological squeezing limit.

A single-step model: phase information gained scales with q * alpha * n_sc
while stochastic loss injects N * n_sc / n_loss of variance, giving an
optimal number of scattered photons per atom and a minimum Fano factor in
closed form.  For coherence-sensitive probing the same trade-off, with the
Ramsey-contrast penalty e^(n_sc) on the variance ratio and loss neglected,
yields the squeezing limit and the q*d0 > 4 usefulness threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BudgetParams:
    """Inputs of the single-step estimator-variance model."""

    q: float
    alpha_at: float
    n_atoms: float
    n_loss: float
    n_sc: float = 0.0
    prior_var: float = math.inf

    def __post_init__(self) -> None:
        if not 0.0 < self.q <= 1.0:
            raise ValueError("q must lie in (0, 1]")
        if self.alpha_at <= 0:
            raise ValueError("alpha_at must be > 0")
        if self.n_atoms <= 0:
            raise ValueError("n_atoms must be > 0")
        if self.n_loss <= 0:
            raise ValueError("n_loss must be > 0")
        if self.n_sc < 0:
            raise ValueError("n_sc must be >= 0")
        if self.prior_var <= 0:
            raise ValueError("prior_var must be > 0 (use inf for uninformative)")


@dataclass(frozen=True)
class SqueezeParams:
    """Inputs of the squeezing branch: efficiency, ensemble optical depth, strength."""

    q: float
    d0: float
    n_sc: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.q <= 1.0:
            raise ValueError("q must lie in (0, 1]")
        if self.d0 < 0:
            raise ValueError("d0 must be >= 0")
        if self.n_sc < 0:
            raise ValueError("n_sc must be >= 0")


def estimator_variance(p: BudgetParams) -> float:
    """Atom-number estimator variance after scattering n_sc photons per atom.

    (1/prior_var + q alpha n_sc)^(-1) + N n_sc / n_loss; an infinite prior
    variance drops the first reciprocal term, and the variance diverges
    when no measurement is made on an uninformative prior.
    """
    info = p.q * p.alpha_at * p.n_sc
    if math.isfinite(p.prior_var):
        info += 1.0 / p.prior_var
    measurement_term = 1.0 / info if info > 0 else math.inf
    return measurement_term + p.n_atoms * p.n_sc / p.n_loss


def optimal_nsc(n_atoms: float, q: float, alpha_at: float, n_loss: float) -> float:
    """Scattered photons per atom minimizing the uninformative-prior variance."""
    if min(n_atoms, q, alpha_at, n_loss) <= 0:
        raise ValueError("all arguments must be > 0")
    return math.sqrt(n_loss / (n_atoms * q * alpha_at))


def min_fano(
    n_atoms: float, q: float, alpha_at: float, n_loss: float
) -> tuple[float, float]:
    """Minimum achievable Fano factor sqrt(4 / (N n_loss q alpha)) and its dB value."""
    if min(n_atoms, q, alpha_at, n_loss) <= 0:
        raise ValueError("all arguments must be > 0")
    f = math.sqrt(4.0 / (n_atoms * n_loss * q * alpha_at))
    return f, 10.0 * math.log10(f)


def tomography_nloss(n_hf: float, n_heat: float) -> float:
    """Critical scattering count with both channels open: harmonic combination."""
    if n_hf <= 0 or n_heat <= 0:
        raise ValueError("both scattering numbers must be > 0")
    return 1.0 / (1.0 / n_hf + 1.0 / n_heat)


def squeezing(n_sc: float, q: float, d0: float) -> tuple[float, float]:
    """Projection-noise reduction xi = e^(n_sc) / (1 + q d0 n_sc / 4), with dB.

    The exponential is the fringe-contrast penalty e^(-n_sc/2) on the
    slope, squared on the variance ratio; atom loss is neglected in this
    branch.  xi < 1 marks metrologically useful squeezing.
    """
    if n_sc < 0:
        raise ValueError("n_sc must be >= 0")
    xi = math.exp(n_sc) / (1.0 + q * d0 * n_sc / 4.0)
    return xi, 10.0 * math.log10(xi)


def optimal_squeezing(q: float, d0: float) -> tuple[float, float]:
    """Probing strength and value of the best achievable squeezing.

    Closed form n_sc = max(0, 1 - 4/(q d0)): below the q*d0 = 4 threshold
    no probing strength squeezes, at high optical depth the optimum
    approaches one scattered photon per atom.
    """
    if q <= 0 or d0 <= 0:
        raise ValueError("q and d0 must be > 0")
    n_sc_opt = max(0.0, 1.0 - 4.0 / (q * d0))
    xi_opt, _ = squeezing(n_sc_opt, q, d0)
    return n_sc_opt, xi_opt


def budget_report(
    q: float,
    alpha_at: float,
    n_atoms: float,
    n_loss: float,
    prior_var: float = math.inf,
) -> dict:
    """All closed-form budget outputs for one parameter set, as a flat dict."""
    n_sc_opt = optimal_nsc(n_atoms, q, alpha_at, n_loss)
    fano_min, fano_min_db = min_fano(n_atoms, q, alpha_at, n_loss)
    var_min = estimator_variance(
        BudgetParams(
            q=q,
            alpha_at=alpha_at,
            n_atoms=n_atoms,
            n_loss=n_loss,
            n_sc=n_sc_opt,
            prior_var=prior_var,
        )
    )
    d0 = alpha_at * n_atoms
    sq_n_sc, sq_xi = optimal_squeezing(q, d0)
    return {
        "q": q,
        "alpha_at": alpha_at,
        "n_atoms": n_atoms,
        "n_loss": n_loss,
        "prior_var": prior_var if math.isfinite(prior_var) else None,
        "d0": d0,
        "n_sc_opt": n_sc_opt,
        "var_min": var_min,
        "fano_min": fano_min,
        "fano_min_db": fano_min_db,
        "xi_opt": sq_xi,
        "xi_opt_db": 10.0 * math.log10(sq_xi),
        "threshold_ok": q * d0 > 4.0,
    }
