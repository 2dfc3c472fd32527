"""Two-level atomic response to detuned probe light and detection efficiency.

Dispersive phase shift and absorptive attenuation of a weak probe are
expressed through the on-resonance optical depth of the ensemble and a
dimensionless detuning in units of half the natural linewidth.  The exact
Lorentzian forms are used throughout; the familiar large-detuning
approximations appear only in consistency tests.  All functions here are
pure and every other module builds on them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

# SI defining constants (exact by definition, 2019 redefinition).
PLANCK_H = 6.62607015e-34       # J s
SPEED_OF_LIGHT = 299792458.0    # m / s

# Cs D2 defaults used by the bundled scenarios.
CESIUM_D2_LINEWIDTH_HZ = 5.23e6
CESIUM_D2_WAVELENGTH_M = 852.3e-9

# Linear-response validity: warn when the probe power exceeds 10 % of this.
DEFAULT_SATURATION_POWER_W = 224e-9


def photon_flux(power_watts: float, wavelength_m: float) -> float:
    """Photons per second carried by a beam of the given power and wavelength."""
    if power_watts < 0:
        raise ValueError("power_watts must be >= 0")
    if wavelength_m <= 0:
        raise ValueError("wavelength_m must be > 0")
    return power_watts * wavelength_m / (PLANCK_H * SPEED_OF_LIGHT)


@dataclass(frozen=True)
class ProbeConfig:
    """Probe light settings.

    ``detuning_halfwidths`` is the detuning in units of half the natural
    linewidth (dimensionless).  Powers far below saturation are assumed; a
    warning is emitted above 10 % of ``saturation_power_w``.
    """

    detuning_halfwidths: float
    power_watts: float
    wavelength_m: float = CESIUM_D2_WAVELENGTH_M
    natural_linewidth_hz: float = CESIUM_D2_LINEWIDTH_HZ
    saturation_power_w: float = DEFAULT_SATURATION_POWER_W

    def __post_init__(self) -> None:
        if self.power_watts < 0:
            raise ValueError("power_watts must be >= 0")
        if self.wavelength_m <= 0:
            raise ValueError("wavelength_m must be > 0")
        if self.natural_linewidth_hz <= 0:
            raise ValueError("natural_linewidth_hz must be > 0")
        if not math.isfinite(self.photon_flux):
            raise ValueError("derived photon flux is not finite")
        if self.power_watts > 0.1 * self.saturation_power_w:
            warnings.warn(
                f"probe power {self.power_watts:.3g} W exceeds 10% of the "
                f"saturation power {self.saturation_power_w:.3g} W; the linear "
                "two-level response used here may not apply",
                stacklevel=2,
            )

    @property
    def photon_flux(self) -> float:
        """Photon flux at the atoms, in photons per second."""
        return photon_flux(self.power_watts, self.wavelength_m)

    @property
    def detuning_hz(self) -> float:
        """Absolute detuning in Hz (detuning_halfwidths * linewidth / 2)."""
        return self.detuning_halfwidths * self.natural_linewidth_hz / 2.0


@dataclass(frozen=True)
class DetectionChain:
    """Multiplicative efficiency factors of the phase detection chain.

    detector_qe: photo-detector quantum efficiency
    path_loss:   optical loss between the atoms and the detector
    mode_overlap: spatial overlap of signal and local oscillator
    noise_ratio: local-oscillator shot noise over total detection noise
    """

    detector_qe: float = 0.8
    path_loss: float = 0.2
    mode_overlap: float = 0.79
    noise_ratio: float = 0.79

    def __post_init__(self) -> None:
        for name in ("detector_qe", "path_loss", "mode_overlap", "noise_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @property
    def q(self) -> float:
        return quantum_efficiency(self)

    @classmethod
    def from_total(cls, q: float) -> "DetectionChain":
        """Chain with the given overall efficiency, folded into detector_qe.

        Only the product is contractual; the individual factors are not
        separately observable in any computation downstream.
        """
        if not 0.0 <= q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        return cls(detector_qe=q, path_loss=0.0, mode_overlap=1.0, noise_ratio=1.0)


@dataclass(frozen=True)
class CouplingParams:
    """Per-atom coupling strength on the probed transition."""

    alpha_at: float

    def __post_init__(self) -> None:
        if self.alpha_at <= 0:
            raise ValueError("alpha_at must be > 0")

    def optical_depth(self, n_atoms: float) -> float:
        """Ensemble on-resonance optical depth alpha_at * N."""
        if n_atoms < 0:
            raise ValueError("n_atoms must be >= 0")
        return self.alpha_at * n_atoms


def phase_shift(d0: float, detuning_halfwidths: float) -> float:
    """Dispersive phase shift (rad) of a probe crossing an ensemble.

    Exact Lorentzian form (d0/2) * D / (1 + D^2) with D the detuning in
    half-linewidths; antisymmetric in D and linear in d0.
    """
    if d0 < 0:
        raise ValueError("optical depth d0 must be >= 0")
    d = detuning_halfwidths
    return 0.5 * d0 * d / (1.0 + d * d)


def absorption_fraction(d0: float, detuning_halfwidths: float) -> float:
    """Fraction of probe photons removed, optically thin limit: d0/(1 + D^2)."""
    if d0 < 0:
        raise ValueError("optical depth d0 must be >= 0")
    d = detuning_halfwidths
    return d0 / (1.0 + d * d)


def single_atom_phase(alpha_at: float, detuning_halfwidths: float) -> float:
    """Phase shift contributed by one atom: phase_shift with d0 = alpha_at."""
    if alpha_at <= 0:
        raise ValueError("alpha_at must be > 0")
    return phase_shift(alpha_at, detuning_halfwidths)


def quantum_efficiency(chain: DetectionChain) -> float:
    """Overall detection efficiency: detector_qe * (1 - path_loss) * overlap * noise_ratio."""
    return (
        chain.detector_qe
        * (1.0 - chain.path_loss)
        * chain.mode_overlap
        * chain.noise_ratio
    )
