"""Beat-note synthesis, phase demodulation and Allan-deviation analysis.

The two probe sidebands and the local oscillator are not simulated as
optical carriers; only their net effect is: a beat at the intermediate
frequency whose phase carries the atomic signal, riding on white shot
noise whose per-bin variance equals the local-oscillator photoelectron
count in that bin (Gaussian large-count limit).  Demodulation integrates
sine and cosine quadratures over windows of an integer number of beat
periods with rectangular weighting, so the noiseless round trip is exact
to floating point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .physics import DetectionChain, ProbeConfig, quantum_efficiency

DEFAULT_BEAT_FREQ_HZ = 62.5e6
DEFAULT_SAMPLES_PER_PERIOD = 8

# Chunk size for trace synthesis, keeps peak memory ~3 arrays of this length.
_SYNTH_CHUNK = 1 << 22


class DegenerateWindowError(ValueError):
    """Raised when both demodulation quadratures of a window are exactly zero."""


@dataclass
class BeatTrace:
    """Sampled balanced-detector output around the beat frequency.

    ``samples`` holds signed photo-electron counts per sample bin after
    balanced subtraction.  ``lo_intensity`` and ``signal_intensity`` are in
    photoelectron-flux units (photoelectrons per second); ``kappa`` is the
    intensity-to-photoelectron conversion already applied (1.0 here).
    """

    sample_rate_hz: float
    beat_freq_hz: float
    samples: np.ndarray
    kappa: float
    lo_intensity: float
    signal_intensity: float
    integer_periods: bool = True

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 2.0 * self.beat_freq_hz:
            raise ValueError("sample_rate_hz must exceed twice the beat frequency")
        if len(self.samples) < self.sample_rate_hz / self.beat_freq_hz:
            raise ValueError("trace must cover at least one full beat period")


@dataclass
class PhaseSample:
    """One demodulated phase estimate over a window of m beat periods."""

    time_s: float
    phase_rad: float
    window_s: float
    n_signal_photons: float


@dataclass
class AllanSeries:
    """Allan deviation versus window length, with the shot-noise prediction."""

    taus_s: np.ndarray
    adev_rad: np.ndarray
    theory_rad: np.ndarray
    n_pairs: np.ndarray


def synthesize_trace(
    phi: float,
    config: ProbeConfig,
    chain: DetectionChain,
    lo_flux: float,
    duration_s: float,
    sample_rate_hz: float,
    rng_seed: int,
    beat_freq_hz: float = DEFAULT_BEAT_FREQ_HZ,
    shot_noise: bool = True,
    lo_walk_rad_per_sqrt_s: float = 0.0,
) -> BeatTrace:
    """Simulate the balanced-detector record for a constant probe phase.

    The deterministic part is 2*sqrt(2*I_s*I_lo)*cos(Omega*t + phi) per
    sample bin; when ``shot_noise`` is on, zero-mean Gaussian noise with
    variance equal to the LO photoelectron count per bin is added.
    ``shot_noise=False`` is the infinite-LO limit switch used for exact
    round-trip checks.  ``lo_walk_rad_per_sqrt_s`` adds a slow random walk
    of the local-oscillator phase for servo-robustness studies; the
    default of zero models a perfect phase lock.  Identical seed,
    identical trace.
    """
    if lo_flux <= 0:
        raise ValueError("lo_flux must be > 0")
    if duration_s * beat_freq_hz < 1.0:
        raise ValueError("duration_s must cover at least one beat period")

    flux = config.photon_flux
    q = quantum_efficiency(chain)
    i_s = q * flux          # detected signal photoelectron flux
    i_lo = float(lo_flux)
    if i_s > 0 and i_lo / i_s < 100.0:
        warnings.warn(
            f"LO flux only {i_lo / i_s:.1f}x the signal flux; the additive "
            "Gaussian shot-noise model assumes a dominant LO",
            stacklevel=2,
        )

    n_periods = duration_s * beat_freq_hz
    integer_periods = abs(n_periods - round(n_periods)) < 1e-9

    dt = 1.0 / sample_rate_hz
    n_bins = int(round(duration_s * sample_rate_hz))
    omega = 2.0 * math.pi * beat_freq_hz
    amp = 2.0 * math.sqrt(2.0 * i_s * i_lo) * dt
    noise_sigma = math.sqrt(i_lo * dt)

    rng = np.random.default_rng(rng_seed)
    samples = np.empty(n_bins)
    walk_state = 0.0
    walk_sigma = lo_walk_rad_per_sqrt_s * math.sqrt(dt)
    for start in range(0, n_bins, _SYNTH_CHUNK):
        stop = min(start + _SYNTH_CHUNK, n_bins)
        t = np.arange(start, stop, dtype=float) * dt
        arg = omega * t + phi
        if walk_sigma > 0.0:
            walk = walk_state + np.cumsum(rng.normal(0.0, walk_sigma, stop - start))
            walk_state = float(walk[-1])
            arg += walk
        chunk = np.cos(arg)
        chunk *= amp
        if shot_noise:
            chunk += rng.normal(0.0, noise_sigma, stop - start)
        samples[start:stop] = chunk

    return BeatTrace(
        sample_rate_hz=sample_rate_hz,
        beat_freq_hz=beat_freq_hz,
        samples=samples,
        kappa=1.0,
        lo_intensity=i_lo,
        signal_intensity=i_s,
        integer_periods=integer_periods,
    )


def demodulate(trace: BeatTrace, m_periods: int) -> list[PhaseSample]:
    """Split a trace into windows of m beat periods and extract the phase.

    Per window the sine and cosine quadrature sums are formed against
    sin(Omega t) and cos(Omega t); the phase is atan2(-sin_sum, cos_sum),
    referenced so that a small phase maps to itself.  The sampling must be
    commensurate: m periods must hold an integer number of sample bins.
    """
    if m_periods < 1:
        raise ValueError("m_periods must be >= 1")
    samples_per_period = trace.sample_rate_hz / trace.beat_freq_hz
    bins_float = m_periods * samples_per_period
    bins = int(round(bins_float))
    if abs(bins_float - bins) > 1e-9:
        raise ValueError(
            "window of m periods does not hold an integer number of bins; "
            "choose a sample rate commensurate with the beat frequency"
        )
    n_windows = len(trace.samples) // bins
    if n_windows < 1:
        raise ValueError("trace too short for one window of m periods")

    dt = 1.0 / trace.sample_rate_hz
    omega = 2.0 * math.pi * trace.beat_freq_hz
    t = np.arange(bins) * dt
    sin_t = np.sin(omega * t)
    cos_t = np.cos(omega * t)

    blocks = trace.samples[: n_windows * bins].reshape(n_windows, bins)
    sin_sum = blocks @ sin_t
    cos_sum = blocks @ cos_t

    degenerate = (sin_sum == 0.0) & (cos_sum == 0.0)
    if degenerate.any():
        raise DegenerateWindowError(
            f"window {int(np.flatnonzero(degenerate)[0])} has zero quadratures"
        )

    window_s = bins * dt
    n_signal = trace.signal_intensity * window_s
    phases = np.arctan2(-sin_sum, cos_sum)
    return [
        PhaseSample(
            time_s=w * window_s,
            phase_rad=float(phases[w]),
            window_s=window_s,
            n_signal_photons=n_signal,
        )
        for w in range(n_windows)
    ]


def phase_resolution(q: float, n_photons: float) -> float:
    """Shot-noise-limited phase resolution 1 / (2 sqrt(q * n_photons))."""
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    if n_photons <= 0:
        raise ValueError("n_photons must be > 0")
    return 1.0 / (2.0 * math.sqrt(q * n_photons))


def allan_deviation(
    phases: Sequence[PhaseSample],
    octave_windows: Sequence[int] | None = None,
) -> AllanSeries:
    """Two-sample (non-overlapping) Allan deviation of a phase stream.

    For each requested aggregation factor k, the base samples are grouped
    into consecutive non-overlapping blocks of k, block means are formed,
    and adev^2 = 0.5 * mean of squared successive differences.  Factors
    leaving fewer than two block means are dropped.  The theory column is
    the shot-noise prediction from the signal photons carried by the
    samples; it is NaN when the samples carry no photon count.
    """
    n = len(phases)
    if n < 2:
        raise ValueError("need at least two phase samples")
    values = np.array([p.phase_rad for p in phases])
    tau0 = phases[0].window_s
    n_signal0 = phases[0].n_signal_photons

    if octave_windows is None:
        octave_windows = []
        k = 1
        while n // k >= 16:
            octave_windows.append(k)
            k *= 2
    if any(k < 1 for k in octave_windows):
        raise ValueError("aggregation factors must be >= 1")
    octave_windows = sorted(set(int(k) for k in octave_windows))

    taus, adevs, theory, pairs = [], [], [], []
    for k in octave_windows:
        n_groups = n // k
        if n_groups < 2:
            continue  # fewer than two aggregated samples: omitted
        means = values[: n_groups * k].reshape(n_groups, k).mean(axis=1)
        diffs = np.diff(means)
        taus.append(k * tau0)
        adevs.append(math.sqrt(0.5 * float(np.mean(diffs * diffs))))
        pairs.append(len(diffs))
        if n_signal0 > 0:
            theory.append(1.0 / (2.0 * math.sqrt(k * n_signal0)))
        else:
            theory.append(math.nan)

    return AllanSeries(
        taus_s=np.array(taus),
        adev_rad=np.array(adevs),
        theory_rad=np.array(theory),
        n_pairs=np.array(pairs, dtype=int),
    )
