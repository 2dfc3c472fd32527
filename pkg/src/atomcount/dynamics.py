"""Stochastic ground truth: Markov thinning of the atom number plus noisy phase readout.

Each trap loss channel (background collisions, probe-induced heating and,
with the repumper off, hyperfine pumping into the dark ground state) acts
as an independent per-atom exponential rate; together they set one
per-step survival probability.  The atom number then evolves by binomial
thinning and each step emits a phase observation with additive Gaussian
readout noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

# Probe-induced heating: mean scattering events to eject one atom, by probe
# power.  The dependence on power is sub-linear and is taken as tabulated
# input with nearest-neighbour lookup; no interpolation model is asserted.
HEAT_EVENTS_BY_POWER_W: dict[float, float] = {
    3.6e-9: 380.0,
    1.1e-9: 190.0,
    0.15e-9: 56.0,
}

DEFAULT_HF_EVENTS = 67.0
DEFAULT_STEP_S = 5e-6


@dataclass(frozen=True)
class TrapParams:
    """Loss-channel parameters of the trapped ensemble.

    ``n_heat`` is either a scalar or a mapping from probe power (W) to the
    mean number of scattering events per ejected atom.
    """

    tau_bg_s: float
    n_heat: float | Mapping[float, float] = field(
        default_factory=lambda: dict(HEAT_EVENTS_BY_POWER_W)
    )
    n_hf: float = DEFAULT_HF_EVENTS
    repump_on: bool = True

    def __post_init__(self) -> None:
        if self.tau_bg_s <= 0:
            raise ValueError("tau_bg_s must be > 0")
        if self.n_hf <= 0:
            raise ValueError("n_hf must be > 0")
        if isinstance(self.n_heat, Mapping):
            if not self.n_heat or any(v <= 0 for v in self.n_heat.values()):
                raise ValueError("n_heat table must be non-empty with positive entries")
        elif self.n_heat <= 0:
            raise ValueError("n_heat must be > 0")

    def heat_events(self, power_watts: float | None = None) -> float:
        """Scattering events per ejected atom, nearest table entry by power."""
        if not isinstance(self.n_heat, Mapping):
            return float(self.n_heat)
        if power_watts is None:
            raise ValueError("power_watts required to look up the n_heat table")
        nearest = min(self.n_heat, key=lambda p: abs(p - power_watts))
        return float(self.n_heat[nearest])


@dataclass
class Trajectory:
    """Simulated time series of true atom number and observed phase.

    Entry ``l`` (0-based) holds the state after ``l + 1`` thinning steps
    and the phase observed at that step; the initial atom number ``n0``
    precedes all observations.  ``n_sc_cum`` is the cumulative number of
    photons scattered per atom.
    """

    dt_s: float
    n0: int
    n_true: np.ndarray
    phi_meas: np.ndarray
    n_sc_cum: np.ndarray

    @property
    def times_s(self) -> np.ndarray:
        return self.dt_s * np.arange(1, len(self.n_true) + 1)


class MeanDecay(NamedTuple):
    exact: float
    exponential: float
    difference: float


def scattering_rate(alpha_at: float, detuning_halfwidths: float, flux: float) -> float:
    """Free-space scattering events per second per atom: flux * alpha / (1 + D^2)."""
    if flux < 0:
        raise ValueError("flux must be >= 0")
    d = detuning_halfwidths
    return flux * alpha_at / (1.0 + d * d)


def step_loss_probability(
    params: TrapParams,
    r_sc: float,
    dt_s: float,
    power_watts: float | None = None,
) -> float:
    """Per-atom loss probability over one step of duration dt_s.

    Combines 1/tau_bg, heating r_sc/n_heat and, with the repumper off,
    hyperfine pumping r_sc/n_hf as independent rates inside a single
    exponential survival factor.  Steps with P > 0.5 are rejected: the
    one-observation-per-step model no longer applies there.
    """
    if dt_s < 0:
        raise ValueError("dt_s must be >= 0")
    if r_sc < 0:
        raise ValueError("r_sc must be >= 0")
    rate = 1.0 / params.tau_bg_s + r_sc / params.heat_events(power_watts)
    if not params.repump_on:
        rate += r_sc / params.n_hf
    p = -math.expm1(-dt_s * rate)
    if p > 0.5:
        raise ValueError(
            f"per-step loss probability {p:.3f} > 0.5; reduce dt_s for a valid model"
        )
    return p


def simulate_trajectory(
    n0: int,
    steps: int,
    p_loss: float,
    k_phase: float,
    delta_phi: float,
    rng_seed: int,
    dt_s: float = DEFAULT_STEP_S,
    scatter_rate_per_atom: float = 0.0,
) -> Trajectory:
    """Draw one trajectory: binomial thinning plus Gaussian phase readout.

    N_l ~ Binomial(N_{l-1}, 1 - P) and phi_l = k_phase * N_l + eps with
    eps ~ Normal(0, delta_phi^2).  Seeded and reproducible.
    """
    if n0 < 0:
        raise ValueError("n0 must be >= 0")
    if not 0.0 <= p_loss <= 1.0:
        raise ValueError("p_loss must lie in [0, 1]")
    if delta_phi <= 0:
        raise ValueError("delta_phi must be > 0")

    rng = np.random.default_rng(rng_seed)
    n_true = np.empty(steps, dtype=np.int64)
    n = int(n0)
    survive = 1.0 - p_loss
    for l in range(steps):
        n = int(rng.binomial(n, survive)) if n > 0 else 0
        n_true[l] = n
    phi_meas = k_phase * n_true + rng.normal(0.0, delta_phi, steps)
    n_sc_cum = scatter_rate_per_atom * dt_s * np.arange(1, steps + 1)
    return Trajectory(dt_s=dt_s, n0=int(n0), n_true=n_true, phi_meas=phi_meas, n_sc_cum=n_sc_cum)


def mean_decay(n0: float, l: int, p: float) -> MeanDecay:
    """Expected atoms after l thinning steps: exact n0*(1-P)^l and n0*e^(-lP).

    The exponential form is the small-P approximation of the exact product;
    their difference is exposed so callers can judge the approximation.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if l < 0:
        raise ValueError("l must be >= 0")
    exact = n0 * (1.0 - p) ** l
    exponential = n0 * math.exp(-l * p)
    return MeanDecay(exact=exact, exponential=exponential, difference=exact - exponential)
