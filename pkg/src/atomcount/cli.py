"""Batch front-end: seeded scenarios driven by a TOML config, CSV/JSON artifacts.

Commands: allan, simulate, filter, calibrate, budget, sweep.  Every run is
keyed by a hash of the resolved configuration and writes into its own
subdirectory, followed by a manifest with per-file checksums.  Numeric CSV
content is deterministic for identical config and seed: one master seed,
replicate i drawing from a generator seeded with master XOR i.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, bayes, budget, calib, dynamics, homodyne, physics
from . import _svg
from ._schema import load_schema, validate

ENV_OUT_DIR = "ATOMCOUNT_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = ("allan", "simulate", "filter", "calibrate", "budget", "sweep")

# Allowed keys per section, with expected types. Unknown keys are rejected.
_TOP_KEYS = {"scenario": str, "seed": int, "replicates": int, "output_dir": str}
_SECTION_KEYS: dict[str, dict[str, type]] = {
    "probe": {
        "power_w": float,
        "detuning_halfwidths": float,
        "wavelength_m": float,
        "natural_linewidth_hz": float,
    },
    "detection": {
        "q": float,
        "detector_qe": float,
        "path_loss": float,
        "mode_overlap": float,
        "noise_ratio": float,
    },
    "coupling": {"alpha_at": float},
    "trap": {"tau_bg_s": float, "n_heat": float, "n_hf": float, "repump": bool},
    "filter": {
        "n_max": int,
        "dt_s": float,
        "band_sigmas": float,
        "steps": int,
        "n0": int,
        "n0_min": int,
        "n0_max": int,
    },
    "allan": {
        "powers_w": list,
        "m_periods": int,
        "samples_per_period": int,
        "n_windows": int,
        "max_octave": int,
        "lo_flux_pe_s": float,
    },
    "calib": {
        "n_atoms": float,
        "alpha_at": float,
        "k_branch": float,
        "duration_s": float,
        "n_points": int,
        "noise_std": float,
        "n_average": int,
        "input_csv": str,
        "method": str,
    },
    "budget": {"preset": str, "n_atoms": float, "n_loss": float, "prior_var": float, "d0": float},
    "sweep": {"param": str, "start": float, "stop": float, "points": int},
}

DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 1,
    "replicates": 1,
    "output_dir": "runs",
    "probe": {
        "power_w": 154e-12,
        "detuning_halfwidths": 24.0,
        "wavelength_m": physics.CESIUM_D2_WAVELENGTH_M,
        "natural_linewidth_hz": physics.CESIUM_D2_LINEWIDTH_HZ,
    },
    "detection": {"q": 0.40},
    "coupling": {"alpha_at": 0.024},
    "trap": {"tau_bg_s": 20e-3, "n_heat": 56.0, "n_hf": 67.0, "repump": True},
    "filter": {
        "n_max": 4399,
        "dt_s": 5e-6,
        "band_sigmas": 10.0,
        "steps": 120,
        "n0_min": 1000,
        "n0_max": 2500,
    },
    "allan": {
        "powers_w": [15.4e-12, 154e-12, 1540e-12],
        "m_periods": 64,
        "samples_per_period": 8,
        "n_windows": 16384,
        "max_octave": 7,
        "lo_flux_pe_s": 1e12,
    },
    "calib": {
        "n_atoms": 1606.0,
        "alpha_at": 0.0164,
        "k_branch": 2.4,
        "duration_s": 4e-4,
        "n_points": 400,
        "noise_std": 0.01,
        "n_average": 200,
        "method": "fit",
    },
    "budget": {"preset": "preparation", "n_atoms": 2500.0},
    "sweep": {"param": "n_sc", "start": 0.0, "stop": 3.0, "points": 61},
}


class ConfigError(Exception):
    """Configuration problem; carries the offending key for line lookup."""

    def __init__(self, message: str, token: str = ""):
        super().__init__(message)
        self.token = token


def _line_of(raw: str, token: str) -> int:
    if token:
        for lineno, line in enumerate(raw.splitlines(), start=1):
            if token in line:
                return lineno
    return 0


def _coerce(value: Any, expected: type, where: str) -> Any:
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is int and isinstance(value, bool):
        raise ConfigError(f"{where} must be an integer, got a boolean", where)
    if not isinstance(value, expected):
        raise ConfigError(
            f"{where} must be of type {expected.__name__}, got {type(value).__name__}",
            where,
        )
    return value


def _merge_defaults(loaded: dict) -> dict:
    cfg: dict[str, Any] = {}
    for key, default in DEFAULT_CONFIG.items():
        if isinstance(default, dict):
            section = dict(default)
            section.update(loaded.get(key, {}))
            cfg[key] = section
        else:
            cfg[key] = loaded.get(key, default)
    # Sections without defaults on every key (e.g. filter.n0) pass through above.
    for key, value in loaded.items():
        if key not in cfg:
            cfg[key] = value
    return cfg


def _validate_structure(loaded: dict) -> None:
    for key, value in loaded.items():
        if key in _TOP_KEYS:
            _coerce(value, _TOP_KEYS[key], key)
        elif key in _SECTION_KEYS:
            if not isinstance(value, dict):
                raise ConfigError(f"section [{key}] must be a table", key)
            allowed = _SECTION_KEYS[key]
            for sub, subval in value.items():
                if sub not in allowed:
                    raise ConfigError(f"unknown key '{sub}' in section [{key}]", sub)
                value[sub] = _coerce(subval, allowed[sub], f"{key}.{sub}")
        else:
            raise ConfigError(f"unknown key or section '{key}'", key)
    scenario = loaded.get("scenario")
    if scenario is not None and scenario not in COMMANDS:
        raise ConfigError(f"scenario must be one of {COMMANDS}", str(scenario))


def _validate_physical(cfg: dict) -> None:
    """Construct the module-level objects so their preconditions run now."""
    probe_config(cfg)
    detection_chain(cfg)
    alpha = cfg["coupling"]["alpha_at"]
    physics.CouplingParams(alpha_at=alpha)
    trap_params(cfg)
    f = cfg["filter"]
    bayes.FilterConfig(
        k_phase=1.0, delta_phi=1.0, loss_p=0.0, n_max=f["n_max"], band_sigmas=f["band_sigmas"]
    )
    if f["dt_s"] <= 0:
        raise ConfigError("filter.dt_s must be > 0", "dt_s")
    if f["steps"] < 1:
        raise ConfigError("filter.steps must be >= 1", "steps")
    if "n0" in f and f["n0"] < 0:
        raise ConfigError("filter.n0 must be >= 0", "n0")
    if f["n0_min"] > f["n0_max"]:
        raise ConfigError("filter.n0_min must not exceed filter.n0_max", "n0_min")
    a = cfg["allan"]
    if not a["powers_w"] or any(
        not isinstance(p, (int, float)) or p <= 0 for p in a["powers_w"]
    ):
        raise ConfigError("allan.powers_w must be a non-empty list of positive powers", "powers_w")
    if a["n_windows"] < 2 or a["m_periods"] < 1:
        raise ConfigError("allan run has zero duration: need n_windows >= 2 and m_periods >= 1", "n_windows")
    if a["samples_per_period"] < 3:
        raise ConfigError("allan.samples_per_period must be >= 3", "samples_per_period")
    c = cfg["calib"]
    if c["method"] not in ("fit", "asymptote"):
        raise ConfigError("calib.method must be 'fit' or 'asymptote'", "method")
    if c["n_points"] < 20:
        raise ConfigError("calib.n_points must be >= 20", "n_points")
    b = cfg["budget"]
    if b["preset"] not in ("preparation", "tomography", "squeezing", "custom"):
        raise ConfigError("budget.preset must be preparation|tomography|squeezing|custom", "preset")
    if b["preset"] == "custom" and "n_loss" not in b:
        raise ConfigError("budget.n_loss is required for the custom preset", "n_loss")
    s = cfg["sweep"]
    if s["param"] not in ("n_sc", "n_atoms"):
        raise ConfigError("sweep.param must be 'n_sc' or 'n_atoms'", "param")
    if s["points"] < 2 or s["stop"] <= s["start"]:
        raise ConfigError("sweep needs points >= 2 and stop > start", "points")
    if cfg["replicates"] < 1:
        raise ConfigError("replicates must be >= 1", "replicates")
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer", "seed")


def _parse_set_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(
    path: str | None,
    set_overrides: Sequence[str] = (),
    seed: int | None = None,
    replicates: int | None = None,
    out_dir: str | None = None,
) -> dict:
    """Load, override (flags beat env beats file), default-fill and validate."""
    raw = ""
    loaded: dict[str, Any] = {}
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
        try:
            loaded = tomllib.loads(raw)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"TOML parse error: {exc}") from exc

    for item in set_overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got '{item}'", item)
        dotted, _, value = item.partition("=")
        parts = dotted.strip().split(".")
        target = loaded
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"--set path '{dotted}' crosses a non-table", dotted)
        target[parts[-1]] = _parse_set_value(value.strip())

    if seed is not None:
        loaded["seed"] = seed
    if replicates is not None:
        loaded["replicates"] = replicates
    env_out = os.environ.get(ENV_OUT_DIR)
    if env_out:
        loaded["output_dir"] = env_out
    if out_dir is not None:
        loaded["output_dir"] = out_dir

    try:
        _validate_structure(loaded)
        cfg = _merge_defaults(loaded)
        _validate_physical(cfg)
    except ConfigError as exc:
        exc.lineno = _line_of(raw, exc.token)  # type: ignore[attr-defined]
        raise
    except ValueError as exc:
        wrapped = ConfigError(str(exc))
        wrapped.lineno = 0  # type: ignore[attr-defined]
        raise wrapped from exc
    cfg["_config_path"] = path or ""
    return cfg


def config_hash(cfg: dict) -> str:
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    canon = json.dumps(clean, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Derived model objects
# ---------------------------------------------------------------------------


def probe_config(cfg: dict, power_w: float | None = None) -> physics.ProbeConfig:
    p = cfg["probe"]
    return physics.ProbeConfig(
        detuning_halfwidths=p["detuning_halfwidths"],
        power_watts=p["power_w"] if power_w is None else power_w,
        wavelength_m=p["wavelength_m"],
        natural_linewidth_hz=p["natural_linewidth_hz"],
    )


def detection_chain(cfg: dict) -> physics.DetectionChain:
    d = cfg["detection"]
    if "q" in d:
        return physics.DetectionChain.from_total(d["q"])
    return physics.DetectionChain(
        detector_qe=d.get("detector_qe", 0.8),
        path_loss=d.get("path_loss", 0.2),
        mode_overlap=d.get("mode_overlap", 0.79),
        noise_ratio=d.get("noise_ratio", 0.79),
    )


def trap_params(cfg: dict) -> dynamics.TrapParams:
    t = cfg["trap"]
    return dynamics.TrapParams(
        tau_bg_s=t["tau_bg_s"], n_heat=t["n_heat"], n_hf=t["n_hf"], repump_on=t["repump"]
    )


def replicate_seed(master: int, index: int) -> int:
    """Documented splitting rule: replicate i draws from master XOR i."""
    return (master ^ index) & (2**64 - 1)


# ---------------------------------------------------------------------------
# Artifact writing
# ---------------------------------------------------------------------------


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class RunContext:
    cfg: dict
    scenario: str
    out_dir: Path
    svg: bool
    files: list[Path] = field(default_factory=list)

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        self.files.append(path)
        return path

    def write_json(self, name: str, doc: dict, schema_name: str) -> Path:
        doc = _json_safe(doc)
        validate(doc, load_schema(schema_name))
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(path)
        return path

    def write_manifest(self, wall_clock_s: float) -> Path:
        entries = []
        for path in sorted(self.files):
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            entries.append({"name": path.name, "sha256": digest})
        doc = {
            "config_hash": config_hash(self.cfg),
            "seed": self.cfg["seed"],
            "scenario": self.scenario,
            "files": entries,
            "tool_version": __version__,
            "wall_clock_s": wall_clock_s,
        }
        validate(_json_safe(doc), load_schema("manifest"))
        path = self.out_dir / "manifest.json"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_json_safe(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def make_context(cfg: dict, scenario: str, svg: bool) -> RunContext:
    base = Path(cfg["output_dir"])
    out_dir = base / f"{scenario}_{config_hash(cfg)}"
    out_dir.mkdir(parents=True, exist_ok=True)
    return RunContext(cfg=cfg, scenario=scenario, out_dir=out_dir, svg=svg)


# ---------------------------------------------------------------------------
# Scenario implementations
# ---------------------------------------------------------------------------


def filter_run_parameters(cfg: dict) -> dict:
    """Derived per-run quantities shared by the simulate and filter scenarios."""
    probe = probe_config(cfg)
    chain = detection_chain(cfg)
    trap = trap_params(cfg)
    fcfg = cfg["filter"]
    alpha = cfg["coupling"]["alpha_at"]
    flux = probe.photon_flux
    q = physics.quantum_efficiency(chain)
    dt = fcfg["dt_s"]
    k_phase = physics.single_atom_phase(alpha, probe.detuning_halfwidths)
    delta_phi = homodyne.phase_resolution(q, flux * dt)
    r_sc = dynamics.scattering_rate(alpha, probe.detuning_halfwidths, flux)
    p_loss = dynamics.step_loss_probability(trap, r_sc, dt, power_watts=probe.power_watts)
    return {
        "flux": flux,
        "q": q,
        "dt_s": dt,
        "k_phase": k_phase,
        "delta_phi": delta_phi,
        "r_sc": r_sc,
        "p_loss": p_loss,
        "steps": fcfg["steps"],
        "n_max": fcfg["n_max"],
        "band_sigmas": fcfg["band_sigmas"],
    }


def draw_n0(cfg: dict, rng: np.random.Generator) -> int:
    fcfg = cfg["filter"]
    if "n0" in fcfg:
        return int(fcfg["n0"])
    return int(rng.integers(fcfg["n0_min"], fcfg["n0_max"] + 1))


def run_filter_replicate(
    cfg: dict, replicate: int
) -> tuple[dynamics.Trajectory, bayes.FilterOutput, dict]:
    """One seeded replicate: trajectory, filter pass, summary dict."""
    params = filter_run_parameters(cfg)
    seed = replicate_seed(cfg["seed"], replicate)
    rng = np.random.default_rng(seed)
    n0 = draw_n0(cfg, rng)
    traj_seed = int(rng.integers(0, 2**63))
    traj = dynamics.simulate_trajectory(
        n0=n0,
        steps=params["steps"],
        p_loss=params["p_loss"],
        k_phase=params["k_phase"],
        delta_phi=params["delta_phi"],
        rng_seed=traj_seed,
        dt_s=params["dt_s"],
        scatter_rate_per_atom=params["r_sc"],
    )
    fcfg = bayes.FilterConfig(
        k_phase=params["k_phase"],
        delta_phi=params["delta_phi"],
        loss_p=params["p_loss"],
        n_max=params["n_max"],
        band_sigmas=params["band_sigmas"],
    )
    output = bayes.run_filter(traj.phi_meas, fcfg)
    std = np.sqrt(output.variance)
    covered = np.abs(traj.n_true - output.mean) <= 2.0 * std
    summary = {
        "replicate": replicate,
        "seed": seed,
        "n0": n0,
        "min_fano_db": output.min_fano_db,
        "step_of_min": output.min_fano_step,
        "loss_fraction_at_min": output.loss_fraction_at_min,
        "photons_used": params["flux"] * params["dt_s"] * (output.min_fano_step + 1),
        "posterior_std_at_min": float(std[output.min_fano_step]),
        "coverage_2sigma": float(np.mean(covered)),
        "skipped_updates": len(output.skipped_steps),
    }
    return traj, output, summary


def simulate_replicate(cfg: dict, replicate: int) -> dynamics.Trajectory:
    """One seeded ground-truth trajectory, without filtering."""
    params = filter_run_parameters(cfg)
    rng = np.random.default_rng(replicate_seed(cfg["seed"], replicate))
    n0 = draw_n0(cfg, rng)
    return dynamics.simulate_trajectory(
        n0=n0,
        steps=params["steps"],
        p_loss=params["p_loss"],
        k_phase=params["k_phase"],
        delta_phi=params["delta_phi"],
        rng_seed=int(rng.integers(0, 2**63)),
        dt_s=params["dt_s"],
        scatter_rate_per_atom=params["r_sc"],
    )


def cmd_simulate(ctx: RunContext) -> None:
    for r in range(ctx.cfg["replicates"]):
        traj = simulate_replicate(ctx.cfg, r)
        ctx.write_csv(
            f"trajectory_{r:03d}.csv",
            ["t_s", "n_true", "phi_meas_rad", "n_sc_cum"],
            zip(traj.times_s, traj.n_true, traj.phi_meas, traj.n_sc_cum),
        )


def cmd_filter(ctx: RunContext) -> None:
    summaries = []
    for r in range(ctx.cfg["replicates"]):
        traj, output, summary = run_filter_replicate(ctx.cfg, r)
        summaries.append(summary)
        ctx.write_csv(
            f"trajectory_{r:03d}.csv",
            ["t_s", "n_true", "phi_meas_rad", "n_sc_cum"],
            zip(traj.times_s, traj.n_true, traj.phi_meas, traj.n_sc_cum),
        )
        ctx.write_csv(
            f"filter_{r:03d}.csv",
            ["t_s", "post_mean", "post_var", "fano_db"],
            zip(traj.times_s, output.mean, output.variance, output.fano_db),
        )
        ctx.write_json(f"summary_{r:03d}.json", summary, "summary")
        if ctx.svg and r == 0:
            _svg.line_plot(
                ctx.out_dir / "filter_000.svg",
                [(traj.times_s * 1e6, output.fano_db, "fano_db")],
                xlabel="t (us)",
                ylabel="Fano factor (dB)",
                title="Posterior Fano factor, replicate 0",
            )

    fanos = np.array([s["min_fano_db"] for s in summaries])
    edges = np.arange(math.floor(fanos.min()) - 0.5, math.ceil(fanos.max()) + 1.5, 1.0)
    counts, _ = np.histogram(fanos, bins=edges)
    aggregate = {
        "replicates": len(summaries),
        "median_min_fano_db": float(np.median(fanos)),
        "mean_min_fano_db": float(np.mean(fanos)),
        "p10_min_fano_db": float(np.percentile(fanos, 10)),
        "p90_min_fano_db": float(np.percentile(fanos, 90)),
        "median_posterior_std_at_min": float(
            np.median([s["posterior_std_at_min"] for s in summaries])
        ),
        "median_loss_fraction_at_min": float(
            np.median([s["loss_fraction_at_min"] for s in summaries])
        ),
        "coverage_2sigma": float(np.mean([s["coverage_2sigma"] for s in summaries])),
        "histogram": {"bin_edges_db": edges.tolist(), "counts": counts.tolist()},
    }
    ctx.write_json("aggregate.json", aggregate, "aggregate")


def cmd_allan(ctx: RunContext) -> None:
    acfg = ctx.cfg["allan"]
    chain = detection_chain(ctx.cfg)
    beat = homodyne.DEFAULT_BEAT_FREQ_HZ
    spp = acfg["samples_per_period"]
    m = acfg["m_periods"]
    n_windows = acfg["n_windows"]
    sample_rate = spp * beat
    duration = n_windows * m / beat
    octaves = [2**j for j in range(acfg["max_octave"] + 1)]

    plot_series = []
    for idx, power in enumerate(acfg["powers_w"]):
        probe = probe_config(ctx.cfg, power_w=power)
        trace = homodyne.synthesize_trace(
            phi=0.0,
            config=probe,
            chain=chain,
            lo_flux=acfg["lo_flux_pe_s"],
            duration_s=duration,
            sample_rate_hz=sample_rate,
            rng_seed=replicate_seed(ctx.cfg["seed"], idx),
        )
        phases = homodyne.demodulate(trace, m)
        series = homodyne.allan_deviation(phases, octaves)
        ctx.write_csv(
            f"allan_p{idx}.csv",
            ["tau_s", "adev_rad", "theory_rad"],
            zip(series.taus_s, series.adev_rad, series.theory_rad),
        )
        plot_series.append((series.taus_s, series.adev_rad, f"{power * 1e12:.3g} pW"))
        plot_series.append((series.taus_s, series.theory_rad, "theory"))
    if ctx.svg:
        _svg.line_plot(
            ctx.out_dir / "allan.svg",
            plot_series,
            xlabel="tau (s)",
            ylabel="Allan deviation (rad)",
            title="Phase Allan deviation vs shot-noise prediction",
            xlog=True,
            ylog=True,
        )


def _read_transient_csv(path: Path, flux: float, k_branch: float) -> calib.PumpTransient:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["t_s", "transmission"]:
            raise ConfigError(f"{path}: expected CSV header 't_s,transmission'")
        for line in fh:
            if line.strip():
                t, trans = line.strip().split(",")[:2]
                rows.append((float(t), float(trans)))
    times = np.array([r[0] for r in rows])
    trans = np.array([r[1] for r in rows])
    return calib.PumpTransient(times_s=times, transmission=trans, input_flux=flux, k_branch=k_branch)


def cmd_calibrate(ctx: RunContext) -> None:
    ccfg = ctx.cfg["calib"]
    probe = probe_config(ctx.cfg)
    flux = probe.photon_flux
    k_branch = ccfg["k_branch"]

    if "input_csv" in ccfg:
        transient = _read_transient_csv(Path(ccfg["input_csv"]), flux, k_branch)
    else:
        times = np.linspace(0.0, ccfg["duration_s"], ccfg["n_points"])
        rng = np.random.default_rng(replicate_seed(ctx.cfg["seed"], 0))
        transient = calib.synthesize_transient(
            n_atoms=ccfg["n_atoms"],
            alpha_at=ccfg["alpha_at"],
            flux=flux,
            times_s=times,
            k_branch=k_branch,
            noise_std=ccfg["noise_std"],
            n_average=ccfg["n_average"],
            rng=rng,
        )

    cumulative = calib.cumulative_scattered(transient)
    total = float(cumulative[-1])

    if ccfg["method"] == "asymptote":
        n_est = calib.atoms_from_asymptote(total, k_branch)
        doc = {
            "method": "asymptote",
            "n_atoms": n_est,
            "alpha_at": None,
            "stat_err_n": None,
            "stat_err_alpha": None,
            "sys_band_n": calib.FLUX_SCALE_UNCERTAINTY * n_est,
            "residual_norm": None,
            "converged": True,
            "k_branch": k_branch,
            "input_flux": flux,
            "total_scattered": total,
        }
        asymptote = total
    else:
        fit = calib.fit_transient(transient)
        doc = {
            "method": "fit",
            "n_atoms": fit.n_atoms,
            "alpha_at": fit.alpha_at,
            "stat_err_n": fit.stat_err_n,
            "stat_err_alpha": fit.stat_err_alpha,
            "sys_band_n": fit.sys_band_n,
            "residual_norm": fit.residual_norm,
            "converged": fit.converged,
            "k_branch": k_branch,
            "input_flux": flux,
            "total_scattered": total,
        }
        asymptote = k_branch * fit.n_atoms
        model = calib.transmission_model(
            fit.n_atoms, fit.alpha_at, flux, k_branch, transient.times_s
        )
        ctx.write_csv(
            "residuals.csv",
            ["t_s", "transmission", "model_transmission", "residual"],
            zip(transient.times_s, transient.transmission, model, transient.transmission - model),
        )
        if ctx.svg:
            _svg.line_plot(
                ctx.out_dir / "calibrate.svg",
                [
                    (transient.times_s * 1e3, transient.transmission, "data"),
                    (transient.times_s * 1e3, model, "fit"),
                ],
                xlabel="t (ms)",
                ylabel="transmission",
                title="Optical pumping transient",
            )

    ctx.write_csv(
        "cumulative.csv",
        ["t_s", "cumulative_scattered", "asymptote"],
        ((t, c, asymptote) for t, c in zip(transient.times_s, cumulative)),
    )
    ctx.write_json("calib.json", doc, "calib")
    if ccfg["method"] == "fit" and not doc["converged"]:
        raise ArithmeticError("transient fit did not converge; partial calib.json written")


def _budget_inputs(cfg: dict) -> dict:
    bcfg = cfg["budget"]
    trap = trap_params(cfg)
    probe = probe_config(cfg)
    q = physics.quantum_efficiency(detection_chain(cfg))
    alpha = cfg["coupling"]["alpha_at"]
    n_atoms = bcfg["n_atoms"]
    preset = bcfg["preset"]
    if preset == "preparation":
        n_loss = bcfg.get("n_loss", trap.heat_events(probe.power_watts))
    elif preset == "tomography":
        # Coherence probing addresses half the population; both loss channels act.
        n_atoms = n_atoms / 2.0
        n_loss = bcfg.get(
            "n_loss", budget.tomography_nloss(trap.n_hf, trap.heat_events(probe.power_watts))
        )
    elif preset == "squeezing":
        n_loss = bcfg.get("n_loss", 1.0)
    else:
        n_loss = bcfg["n_loss"]
    d0 = bcfg.get("d0", alpha * bcfg["n_atoms"])
    prior_var = bcfg.get("prior_var", math.inf)
    return {
        "preset": preset,
        "q": q,
        "alpha_at": alpha,
        "n_atoms": n_atoms,
        "n_loss": n_loss,
        "d0": d0,
        "prior_var": prior_var,
    }


def budget_report_doc(cfg: dict) -> dict:
    inputs = _budget_inputs(cfg)
    report = budget.budget_report(
        q=inputs["q"],
        alpha_at=inputs["alpha_at"],
        n_atoms=inputs["n_atoms"],
        n_loss=inputs["n_loss"],
        prior_var=inputs["prior_var"],
    )
    report["preset"] = inputs["preset"]
    report["d0"] = inputs["d0"]
    sq_n_sc, sq_xi = budget.optimal_squeezing(inputs["q"], inputs["d0"])
    report["xi_opt"] = sq_xi
    report["xi_opt_db"] = 10.0 * math.log10(sq_xi)
    report["threshold_ok"] = inputs["q"] * inputs["d0"] > 4.0

    ref_nsc = budget.optimal_nsc(1000.0, inputs["q"], inputs["alpha_at"], inputs["n_loss"])
    _, ref_db = budget.min_fano(1000.0, inputs["q"], inputs["alpha_at"], inputs["n_loss"])
    notes = [
        "optimum scales with 1/sqrt(N): at these q, alpha and n_loss the formulas give "
        f"n_sc_opt={ref_nsc:.3f} and min Fano {ref_db:.1f} dB for N=1000 versus "
        f"n_sc_opt={report['n_sc_opt']:.3f} and {report['fano_min_db']:.1f} dB for "
        f"N={inputs['n_atoms']:g}; commonly cited targets for this setup (n_sc 2.4, "
        "-11 dB preparation, -8 dB tomography) match the N=1000 evaluation and are "
        "flagged here, not reconciled",
    ]
    report["notes"] = notes
    return report


def cmd_budget(ctx: RunContext) -> None:
    ctx.write_json("budget.json", budget_report_doc(ctx.cfg), "budget")


def cmd_sweep(ctx: RunContext) -> None:
    scfg = ctx.cfg["sweep"]
    inputs = _budget_inputs(ctx.cfg)
    grid = np.linspace(scfg["start"], scfg["stop"], scfg["points"])
    if scfg["param"] == "n_sc":
        rows = []
        for n_sc in grid:
            params = budget.BudgetParams(
                q=inputs["q"],
                alpha_at=inputs["alpha_at"],
                n_atoms=inputs["n_atoms"],
                n_loss=inputs["n_loss"],
                n_sc=float(n_sc),
                prior_var=inputs["prior_var"],
            )
            var = budget.estimator_variance(params)
            f = var / inputs["n_atoms"]
            xi, xi_db = budget.squeezing(float(n_sc), inputs["q"], inputs["d0"])
            f_db = 10.0 * math.log10(f) if math.isfinite(f) and f > 0 else math.inf
            rows.append((n_sc, var, f, f_db, xi, xi_db))
        path = ctx.write_csv(
            "sweep.csv", ["n_sc", "variance", "fano", "fano_db", "xi", "xi_db"], rows
        )
        if ctx.svg:
            finite = [(r[0], r[1]) for r in rows if math.isfinite(r[1])]
            _svg.line_plot(
                ctx.out_dir / "sweep.svg",
                [([p[0] for p in finite], [p[1] for p in finite], "variance")],
                xlabel="n_sc",
                ylabel="estimator variance",
                title="Variance vs scattered photons per atom",
            )
    else:
        rows = []
        for n_atoms in grid:
            n_sc_opt = budget.optimal_nsc(
                float(n_atoms), inputs["q"], inputs["alpha_at"], inputs["n_loss"]
            )
            fano_min, fano_min_db = budget.min_fano(
                float(n_atoms), inputs["q"], inputs["alpha_at"], inputs["n_loss"]
            )
            var_min = fano_min * n_atoms
            rows.append((n_atoms, n_sc_opt, var_min, fano_min_db))
        ctx.write_csv("sweep.csv", ["n_atoms", "n_sc_opt", "var_min", "fano_min_db"], rows)


_DISPATCH = {
    "allan": cmd_allan,
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "calibrate": cmd_calibrate,
    "budget": cmd_budget,
    "sweep": cmd_sweep,
}


def run_scenario(cfg: dict, scenario: str, svg: bool = False) -> Path:
    """Execute one scenario and return its output directory."""
    started = time.perf_counter()
    ctx = make_context(cfg, scenario, svg)
    _DISPATCH[scenario](ctx)
    ctx.write_manifest(wall_clock_s=time.perf_counter() - started)
    return ctx.out_dir


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML configuration file")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed override")
    common.add_argument("--replicates", type=int, metavar="N", help="replicate count override")
    common.add_argument("--out", metavar="DIR", help="output directory override")
    common.add_argument("--svg", action="store_true", help="also write static SVG plots")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one configuration key (repeatable)",
    )

    parser = argparse.ArgumentParser(
        prog="atomcount",
        description="Seeded measurement scenarios with CSV/JSON artifacts",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "allan": "phase Allan deviation against the shot-noise prediction",
        "simulate": "ground-truth atom-number trajectories",
        "filter": "trajectories plus recursive Bayesian atom-number filtering",
        "calibrate": "optical-pumping transient generation and/or fitting",
        "budget": "closed-form measurement-budget report",
        "sweep": "budget quantities swept over n_sc or n_atoms",
    }
    for command in COMMANDS:
        sub.add_parser(command, parents=[common], help=descriptions[command])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            set_overrides=args.set,
            seed=args.seed,
            replicates=args.replicates,
            out_dir=args.out,
        )
        declared = cfg.get("scenario")
        if declared is not None and declared != args.command:
            raise ConfigError(
                f"config declares scenario '{declared}' but command is '{args.command}'",
                str(declared),
            )
    except ConfigError as exc:
        lineno = getattr(exc, "lineno", 0)
        origin = args.config or "<config>"
        print(f"{origin}:{lineno}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        out_dir = run_scenario(cfg, args.command, svg=args.svg)
    except (ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(out_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
