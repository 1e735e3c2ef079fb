"""Declarative scenario configs and the experiment pipeline behind the CLI.

A scenario file describes one simulated campaign: the specimen, the
excitation scheme and its level schedule, optional exciter and measurement
noise, simulation timing, identification settings, and the reference
backbone used for comparison. Running a scenario produces on-disk artifacts
(identified points, comparison report, optional raw windows) that the
plot-data tooling consumes.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .analysis import (
    BackboneInterpolant,
    interpolate_backbone,
    schedule_from_reference,
    synthesize_frf,
)
from .beam import BeamParams, assemble_beam, limit_models, linear_modes
from .epmc import solve_backbone
from .identify import extract_modal_point, fourier_coeffs, make_sensor_set
from .io import (
    config_hash,
    load_backbone_csv,
    save_backbone_csv,
    save_comparison_csv,
    save_plotdata_csv,
    save_record_csvs,
)
from .rig import (
    ExciterParams,
    FeedbackConfig,
    NoiseConfig,
    PhaseLockedLoop,
    PLLConfig,
    VelocityFeedback,
    build_weighting,
)
from .simulate import (
    Rig,
    SimConfig,
    energy_balance,
    run_backbone_experiment,
    run_pll_experiment,
    run_stepped_sine,
)


class ScenarioError(Exception):
    """Invalid scenario configuration; message carries the key path."""


# ---------------------------------------------------------------------------
# schema validation (hand-rolled: unknown keys rejected with their paths)
# ---------------------------------------------------------------------------

_NUM = (int, float)

SCENARIO_SCHEMA = {
    "name": str,
    "description": str,
    "figure": str,
    "seed": int,
    "model": {
        "youngs_modulus_pa": _NUM,
        "density_kg_m3": _NUM,
        "length_m": _NUM,
        "height_m": _NUM,
        "thickness_m": _NUM,
        "n_elements": int,
        "tangential_stiffness_n_m": _NUM,
        "slip_limit_n": _NUM,
        "friction_node": int,
        "modal_damping": list,
        "modal_damping_higher": _NUM,
        "damping_basis": str,
    },
    "excitation": {
        "scheme": str,  # sfb | mfb | pll
        "node": int,
        "mode": int,
        "levels": {
            "kind": str,  # list | log | reference_tips
            "values": list,
            "start": _NUM,
            "stop": _NUM,
            "count": int,
            "append": list,
        },
        "rms_period_fraction": _NUM,
        "init_level": _NUM,
        "pll": {
            "mode": str,  # backbone | stepped_sine
            "k_p": _NUM,
            "k_i": _NUM,
            "theta_deg": _NUM,
            "theta_start_deg": _NUM,
            "theta_stop_deg": _NUM,
            "theta_count": int,
            "center_frequency": _NUM,
            "force_loop": {"k_p": _NUM, "k_i": _NUM},
            "force_levels": list,
            "per_level": list,
            "backbone_path": str,
        },
    },
    "exciter": {
        "enabled": bool,
        "armature_mass_kg": _NUM,
        "armature_damping_ns_m": _NUM,
        "armature_stiffness_n_m": _NUM,
        "force_constant_n_a": _NUM,
        "coil_inductance_h": _NUM,
        "coil_resistance_ohm": _NUM,
        "stinger_stiffness_n_m": _NUM,
        "rigid_stinger": bool,
        "signal_to_current_a": _NUM,
    },
    "noise": {
        "response_psd": _NUM,
        "force_psd": _NUM,
        "correlation_time_s": _NUM,
        "seed": int,
    },
    "simulation": {
        "dt_s": _NUM,
        "substeps": int,
        "window_periods": int,
        "max_periods": int,
        "min_periods": int,
        "check_periods": int,
        "steady_rms_tol": _NUM,
        "init_periods": int,
        "level_kick": _NUM,
        "pll_phase_tol_deg": _NUM,
    },
    "identification": {
        "n_harmonics": int,
        "n_modes": int,
    },
    "reference": {
        "path": str,
        "n_harmonics": int,
        "points_per_decade": int,
        "tip_min_m": _NUM,
        "tip_max_m": _NUM,
    },
    "comparison": {
        "omega_rel_tol": _NUM,
        "zeta_rel_tol": _NUM,
    },
    "outputs": {
        "save_windows": bool,
    },
}


def _validate(node, schema, path=""):
    if isinstance(schema, dict):
        if not isinstance(node, dict):
            raise ScenarioError(f"{path or 'root'}: expected a mapping")
        for key, value in node.items():
            if key not in schema:
                raise ScenarioError(f"unknown key '{path}{key}'")
            _validate(value, schema[key], f"{path}{key}.")
    else:
        ok = isinstance(node, schema) if not isinstance(schema, tuple) else isinstance(
            node, schema
        )
        if isinstance(node, bool) and schema in (_NUM, int):
            ok = False
        if not ok:
            raise ScenarioError(
                f"key '{path[:-1]}' has wrong type {type(node).__name__}"
            )


def load_scenario(source) -> dict:
    """Load and validate a scenario from a path, YAML string, or dict."""
    if isinstance(source, dict):
        cfg = copy.deepcopy(source)
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        cfg = yaml.safe_load(text)
    if not isinstance(cfg, dict):
        raise ScenarioError("scenario must be a mapping")
    _validate(cfg, SCENARIO_SCHEMA)
    for section in ("excitation",):
        if section not in cfg:
            raise ScenarioError(f"missing required section '{section}'")
    if "scheme" not in cfg["excitation"]:
        raise ScenarioError("missing required key 'excitation.scheme'")
    return cfg


def bundled_scenarios() -> dict:
    """Name -> text of the scenario files shipped with the package."""
    out = {}
    pkg = resources.files("nlmodal") / "scenarios"
    for entry in sorted(pkg.iterdir()):
        if entry.name.endswith(".yaml"):
            out[entry.name[:-5]] = entry.read_text()
    return out


# ---------------------------------------------------------------------------
# reference backbones with on-disk caching
# ---------------------------------------------------------------------------

def default_cache_dir() -> Path:
    env = os.environ.get("NLMODAL_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "nlmodal"


def compute_reference(
    params: BeamParams,
    mode: int,
    tip_range: tuple,
    n_harmonics: int = 13,
    points_per_decade: int = 20,
    cache_dir=None,
):
    """EPMC reference backbone for a mode, cached by configuration hash.

    ``tip_range`` bounds the fundamental tip amplitude; the modal-amplitude
    continuation range is derived from th e linear mode shape with headroom
    at the top (the nonlinear shape grows slightly tip-heavy).
    """
    cache_dir = Path(cache_dir) if cache_dir else default_cache_dir()
    key = config_hash(
        {
            "model": params.to_dict(),
            "mode": mode,
            "tip_range": list(tip_range),
            "n_harmonics": n_harmonics,
            "ppd": points_per_decade,
        }
    )
    cache_file = cache_dir / f"backbone_{key}.csv"
    if cache_file.exists():
        data = load_backbone_csv(cache_file)
        return data, cache_file
    model = assemble_beam(params)
    stick, _ = limit_models(model)
    basis = linear_modes(stick, mode)
    phi_tip = abs(basis.shapes[model.tip_dof, mode - 1])
    a_range = (tip_range[0] / phi_tip, 1.4 * tip_range[1] / phi_tip)
    curve = solve_backbone(
        model,
        mode,
        a_range,
        n_harmonics=n_harmonics,
        points_per_decade=points_per_decade,
    )
    save_backbone_csv(
        cache_file,
        curve.points,
        metadata={
            "kind": "epmc_reference",
            "mode": mode,
            "model": params.to_dict(),
            "n_harmonics": n_harmonics,
            "points_per_decade": points_per_decade,
        },
    )
    return load_backbone_csv(cache_file), cache_file


def reference_interpolant(data) -> BackboneInterpolant:
    return BackboneInterpolant(
        data["a"],
        data["omega"],
        data["zeta"],
        shapes=data.get("shapes"),
        tip_amplitudes=data["tip_amplitude"],
    )


# ---------------------------------------------------------------------------
# scenario execution
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    """In-memory artifacts of one scenario run."""

    scenario: dict
    records: list
    points: list  # IdentifiedModalPoint or None per record
    report_rows: list
    summary: dict
    out_dir: Path | None = None
    reference: dict | None = None
    frf: dict = field(default_factory=dict)


def _beam_params(cfg: dict) -> BeamParams:
    return BeamParams.from_dict(cfg.get("model", {}))


def _noise_config(cfg: dict, seed: int) -> NoiseConfig | None:
    ncfg = cfg.get("noise")
    if not ncfg:
        return None
    return NoiseConfig(
        response_psd=float(ncfg.get("response_psd", 0.0)),
        force_psd=float(ncfg.get("force_psd", 0.0)),
        correlation_time=float(ncfg.get("correlation_time_s", 0.5e-3)),
        seed=int(ncfg.get("seed", seed)),
    )


def _exciter_params(cfg: dict) -> ExciterParams | None:
    ecfg = cfg.get("exciter")
    if not ecfg or not ecfg.get("enabled", False):
        return None
    keys = {
        "armature_mass_kg": "armature_mass",
        "armature_damping_ns_m": "armature_damping",
        "armature_stiffness_n_m": "armature_stiffness",
        "force_constant_n_a": "force_constant",
        "coil_inductance_h": "coil_inductance",
        "coil_resistance_ohm": "coil_resistance",
        "stinger_stiffness_n_m": "stinger_stiffness",
        "rigid_stinger": "rigid_stinger",
        "signal_to_current_a": "signal_to_current",
    }
    kwargs = {keys[k]: v for k, v in ecfg.items() if k in keys}
    return ExciterParams(**kwargs)


def _sim_config(cfg: dict) -> SimConfig:
    scfg = cfg.get("simulation", {})
    kw = {}
    mapping = {
        "dt_s": "dt",
        "substeps": "substeps",
        "window_periods": "window_periods",
        "max_periods": "max_periods",
        "min_periods": "min_periods",
        "check_periods": "check_periods",
        "steady_rms_tol": "steady_rms_tol",
        "init_periods": "init_periods",
        "level_kick": "level_kick",
    }
    for key, attr in mapping.items():
        if key in scfg:
            kw[attr] = scfg[key]
    if "pll_phase_tol_deg" in scfg:
        kw["pll_phase_tol"] = np.radians(scfg["pll_phase_tol_deg"])
    return SimConfig(**kw)


def _levels(cfg_levels: dict, ref_interp, drive_dof, scheme) -> np.ndarray:
    kind = cfg_levels.get("kind", "log")
    if kind == "list":
        levels = np.asarray(cfg_levels["values"], dtype=float)
    elif kind == "log":
        levels = np.logspace(
            np.log10(cfg_levels["start"]),
            np.log10(cfg_levels["stop"]),
            cfg_levels["count"],
        )
    elif kind == "reference_tips":
        if ref_interp is None:
            raise ScenarioError("reference_tips level schedule needs a reference")
        tips = np.logspace(
            np.log10(cfg_levels["start"]),
            np.log10(cfg_levels["stop"]),
            cfg_levels["count"],
        )
        levels = schedule_from_reference(
            ref_interp,
            tips,
            drive_dof,
            kind="force" if scheme == "pll" else "feedback",
        )
    else:
        raise ScenarioError(f"unknown level schedule kind '{kind}'")
    if "append" in cfg_levels:
        levels = np.concatenate([levels, np.asarray(cfg_levels["append"], float)])
    if len(levels) == 0:
        raise ScenarioError("excitation.levels resolved to an empty schedule")
    return levels


def run_scenario(source, out_dir=None, seed=None, cache_dir=None) -> RunResult:
    """Execute a scenario end to end: simulate, identify, compare, persist."""
    cfg = load_scenario(source)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    params = _beam_params(cfg)
    model = assemble_beam(params)
    stick, _ = limit_models(model)
    exc = cfg["excitation"]
    n_modes = int(cfg.get("identification", {}).get("n_modes", 3))
    n_harm_id = int(cfg.get("identification", {}).get("n_harmonics", 7))
    basis = linear_modes(stick, n_modes)
    sensor_dofs = model.translation_dofs
    sensors = make_sensor_set(basis, sensor_dofs)
    mode = int(exc.get("mode", 1))
    node = int(exc.get("node", params.n_elements))
    drive = model.translation_dof(node)
    scheme = exc["scheme"]
    omega0 = basis.frequencies[mode - 1]

    # reference backbone (needed for comparison and for tip-scheduled levels)
    ref_cfg = cfg.get("reference", {})
    ref_data = None
    ref_interp = None
    if ref_cfg.get("path"):
        ref_data = load_backbone_csv(ref_cfg["path"])
    elif ref_cfg:
        tip_rng = (
            float(ref_cfg.get("tip_min_m", 1e-7)),
            float(ref_cfg.get("tip_max_m", 3e-3)),
        )
        ref_data, _ = compute_reference(
            params,
            mode,
            tip_rng,
            n_harmonics=int(ref_cfg.get("n_harmonics", 13)),
            points_per_decade=int(ref_cfg.get("points_per_decade", 20)),
            cache_dir=cache_dir,
        )
    if ref_data is not None:
        ref_interp = reference_interpolant(ref_data)

    sim = _sim_config(cfg)
    noise = _noise_config(cfg, seed)
    exciter = _exciter_params(cfg)
    rig = Rig(model, drive, sensor_dofs, sim, exciter=exciter, noise=noise, seed=seed)

    frf_artifacts = {}
    if scheme in ("sfb", "mfb"):
        levels = _levels(exc.get("levels", {}), ref_interp, drive, scheme)
        tau = float(exc.get("rms_period_fraction", 1.0 / 3.0)) * 2 * np.pi / omega0
        if scheme == "sfb":
            weighting = build_weighting(
                "sfb", drive, sensor_dofs=sensor_dofs, n_dof=model.n_dof
            )
        else:
            weighting = build_weighting(
                "mfb",
                drive,
                sensors.phi_exp,
                sensors.m_exp,
                sensor_dofs,
                mode,
                n_dof=model.n_dof,
            )

        def feedback_factory(level):
            return VelocityFeedback(
                FeedbackConfig(
                    weighting=weighting,
                    level=level,
                    rms_time_constant=tau,
                    init_frequency=omega0,
                    init_duration=sim.init_periods * 2 * np.pi / omega0,
                )
            )

        records = run_backbone_experiment(
            rig,
            feedback_factory,
            levels,
            omega0,
            basis,
            sensors,
            mode,
            init_level=exc.get("init_level"),
        )
    elif scheme == "pll":
        pll_cfg = exc.get("pll", {})
        pll_mode = pll_cfg.get("mode", "backbone")
        center = float(pll_cfg.get("center_frequency", omega0))
        if pll_mode == "backbone":
            levels = _levels(exc.get("levels", {}), ref_interp, drive, scheme)
            pll = PhaseLockedLoop(
                PLLConfig(
                    k_p=float(pll_cfg.get("k_p", 5.0)),
                    k_i=float(pll_cfg.get("k_i", 15.0)),
                    target_phase=np.radians(float(pll_cfg.get("theta_deg", 90.0))),
                    center_frequency=center,
                    excitation_amplitude=float(levels[0]),
                )
            )
            records = run_pll_experiment(rig, pll, levels, basis, sensors, mode)
        elif pll_mode == "stepped_sine":
            records, frf_artifacts = _run_frf_campaign(
                cfg, model, basis, sensors, drive, mode, seed, cache_dir
            )
        else:
            raise ScenarioError(f"unknown pll mode '{pll_mode}'")
    else:
        raise ScenarioError(f"unknown excitation scheme '{scheme}'")

    # identification + comparison
    points = []
    rows = []
    tol_om = float(cfg.get("comparison", {}).get("omega_rel_tol", 0.01))
    tol_ze = float(cfg.get("comparison", {}).get("zeta_rel_tol", 0.15))
    k_sensor = sensors.sensor_index(drive)
    for rec in records:
        point = None
        row = {
            "level": rec.level,
            "classification": rec.classification,
            "tip_amp_m": None,
            "omega_id": None,
            "zeta_id": None,
            "omega_ref": None,
            "zeta_ref": None,
            "omega_rel_err": None,
            "zeta_rel_err": None,
        }
        if rec.window is not None and rec.classification != "not-converged":
            try:
                point = extract_modal_point(
                    rec.window.velocity_matrix(),
                    rec.window.force(),
                    rec.window.times,
                    rec.omega,
                    sensors,
                    drive,
                    n_harmonics=n_harm_id,
                )
                point.level = rec.level
                row.update(
                    tip_amp_m=point.tip_amplitude,
                    omega_id=point.omega,
                    zeta_id=point.zeta,
                )
                # exciter diagnostics: input-to-force phase lag
                if exciter is not None:
                    uc = fourier_coeffs(
                        rec.window.channels["excitation_signal"][:, None],
                        rec.window.times,
                        point.omega,
                        1,
                    )[1, 0]
                    fc = fourier_coeffs(
                        rec.window.force()[:, None], rec.window.times, point.omega, 1
                    )[1, 0]
                    rec.extras["phase_lag_deg"] = float(
                        (np.degrees(np.angle(uc) - np.angle(fc))) % 360.0
                    )
                if noise is not None and noise.response_psd > 0:
                    w = rec.window

                    def _rms(x):
                        return float(np.sqrt(np.mean(np.square(x))))

                    vn = _rms(w.channels[f"velnoise_s{k_sensor}"])
                    fn = _rms(w.channels["forcenoise"])
                    if vn > 0:
                        rec.extras["snr_velocity_db"] = 20 * np.log10(
                            _rms(w.channels[f"vel_s{k_sensor}"]) / vn
                        )
                    if fn > 0:
                        rec.extras["snr_force_db"] = 20 * np.log10(
                            _rms(w.channels["force"]) / fn
                        )
            except Exception as exc_err:  # identification failure is a data point
                rec.extras["identification_error"] = str(exc_err)
        if (
            point is not None
            and ref_interp is not None
            and rec.classification == "periodic"
            and ref_interp.in_range_tip(point.tip_amplitude)
        ):
            ref = ref_interp.at_tip_amplitude(point.tip_amplitude)
            row["omega_ref"] = float(ref["omega"])
            row["zeta_ref"] = float(ref["zeta"])
            row["omega_rel_err"] = (point.omega - row["omega_ref"]) / row["omega_ref"]
            row["zeta_rel_err"] = (point.zeta - row["zeta_ref"]) / row["zeta_ref"]
        points.append(point)
        rows.append(row)

    compared = [r for r in rows if r["omega_rel_err"] is not None]
    summary = {
        "name": cfg.get("name", "scenario"),
        "n_levels": len(records),
        "n_periodic": sum(1 for r in records if r.classification == "periodic"),
        "n_not_converged": sum(
            1 for r in records if r.classification == "not-converged"
        ),
        "classifications": [r.classification for r in records],
        "responding_modes": [r.responding_mode for r in records],
        "n_compared": len(compared),
        "omega_within_tol": sum(
            1 for r in compared if abs(r["omega_rel_err"]) <= tol_om
        ),
        "zeta_within_tol": sum(1 for r in compared if abs(r["zeta_rel_err"]) <= tol_ze),
        "omega_rel_tol": tol_om,
        "zeta_rel_tol": tol_ze,
        "extras": [rec.extras for rec in records],
    }
    if not (scheme == "pll" and exc.get("pll", {}).get("mode") == "stepped_sine"):
        summary["energy"] = energy_balance(rig)

    result = RunResult(
        scenario=cfg,
        records=records,
        points=points,
        report_rows=rows,
        summary=summary,
        reference=ref_data,
        frf=frf_artifacts,
    )
    if out_dir is not None:
        result.out_dir = Path(out_dir)
        _persist(result, cfg, seed)
    return result


def _run_frf_campaign(cfg, model, basis, sensors, drive, mode, seed, cache_dir):
    """Stepped-sine FRF campaign over several force levels (+ synthesis)."""
    exc = cfg["excitation"]
    pll_cfg = exc["pll"]
    n_theta = int(pll_cfg.get("theta_count", 13))
    if "per_level" in pll_cfg:
        plan = [
            (
                float(entry["force"]),
                np.radians(
                    np.linspace(
                        float(entry.get("theta_start_deg", 55.0)),
                        float(entry.get("theta_stop_deg", 130.0)),
                        int(entry.get("theta_count", n_theta)),
                    )
                ),
            )
            for entry in pll_cfg["per_level"]
        ]
    else:
        theta = np.radians(
            np.linspace(
                float(pll_cfg.get("theta_start_deg", 55.0)),
                float(pll_cfg.get("theta_stop_deg", 130.0)),
                n_theta,
            )
        )
        plan = [(float(v), theta) for v in pll_cfg.get("force_levels", [1.0])]
    backbone_path = pll_cfg.get("backbone_path")
    interp = None
    if backbone_path:
        data = load_backbone_csv(backbone_path)
        interp = reference_interpolant(data)
    sim = _sim_config(cfg)
    tip_sensor = int(np.argmax(sensors.sensor_dofs))
    records = []
    frf = {"levels": {}, "synth": {}}
    for F, theta in plan:
        center = float(pll_cfg.get("center_frequency", basis.frequencies[mode - 1]))
        synth = None
        if interp is not None:
            fvec = np.zeros(sensors.n_sensors, dtype=complex)
            fvec[sensors.sensor_index(drive)] = F
            synth = synthesize_frf(interp, fvec, tip_sensor)
            frf["synth"][F] = synth
            center = synthesized_peak(synth)[0]
        pll = PhaseLockedLoop(
            PLLConfig(
                k_p=float(pll_cfg.get("k_p", 60.0)),
                k_i=float(pll_cfg.get("k_i", 300.0)),
                target_phase=np.pi / 2,
                center_frequency=center,
                excitation_amplitude=F,
                force_loop={
                    "k_p": float(pll_cfg.get("force_loop", {}).get("k_p", 0.5)),
                    "k_i": float(pll_cfg.get("force_loop", {}).get("k_i", 0.5)),
                    "target": F,
                },
            )
        )
        rig = Rig(
            model,
            drive,
            sensors.sensor_dofs,
            sim,
            noise=_noise_config(cfg, seed),
            seed=seed,
        )
        pts = run_stepped_sine(rig, pll, theta, basis, sensors, mode)
        freqs, amps = [], []
        for r in pts:
            r.extras["force_level"] = F
            if r.window is None:
                continue
            vc = fourier_coeffs(
                r.window.velocity_matrix(), r.window.times, r.omega, 3
            )
            amps.append(abs(vc[1, tip_sensor]) / r.omega)
            freqs.append(r.extras["pll_omega"])
        frf["levels"][F] = {"omega": np.array(freqs), "tip": np.array(amps)}
        records.extend(pts)
    return records, frf


def top_centroid(freqs, amps, frac: float = 0.99) -> tuple:
    """(frequency, amplitude) of a response peak, flat-top robust.

    The amplitude is the plain maximum; the frequency is the amplitude-
    weighted centroid over points within ``frac`` of the maximum, which is
    stable when friction saturation flattens the resonance top.
    """
    freqs = np.asarray(freqs, dtype=float)
    amps = np.asarray(amps, dtype=float)
    ok = np.isfinite(freqs) & np.isfinite(amps)
    freqs, amps = freqs[ok], amps[ok]
    if len(amps) == 0:
        raise ValueError("no finite FRF points")
    sel = amps >= frac * np.max(amps)
    return float(np.sum(freqs[sel] * amps[sel]) / np.sum(amps[sel])), float(
        np.max(amps)
    )


def synthesized_peak(frf, frac: float = 0.99) -> tuple:
    """Flat-top robust peak of a SynthesizedFrf (both branches pooled)."""
    ws = np.concatenate([frf.omega_low, frf.omega_high])
    am = np.concatenate([frf.tip_low, frf.tip_high])
    return top_centroid(ws, am, frac=frac)


def _persist(result: RunResult, cfg: dict, seed: int) -> None:
    out = result.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scenario_echo.yaml", "w") as fh:
        echo = copy.deepcopy(cfg)
        echo["seed"] = seed
        yaml.safe_dump(echo, fh, sort_keys=True)
    identified = [p for p in result.points if p is not None]
    if identified:
        save_backbone_csv(
            out / "identified.csv",
            identified,
            metadata={"kind": "identified", "name": cfg.get("name", "")},
        )
    if result.reference is not None:
        # re-emit the reference next to the run for self-contained artifacts
        rows = result.reference
        class _P:
            pass

        pts = []
        for i in range(len(rows["a"])):
            q = _P()
            q.amplitude = rows["a"][i]
            q.omega = rows["omega"][i]
            q.zeta = rows["zeta"][i]
            q.tip_amplitude = rows["tip_amplitude"][i]
            q.shape = (
                rows["shapes"][i] if rows.get("shapes") is not None else np.zeros(1)
            )
            pts.append(q)
        save_backbone_csv(out / "reference.csv", pts, metadata=rows.get("metadata", {}))
    save_comparison_csv(out / "report.csv", result.report_rows, result.summary)
    if result.frf.get("levels"):
        series = {}
        for F, dat in result.frf["levels"].items():
            series[f"measured_F{F}"] = (dat["omega"], dat["tip"])
        for F, synth in result.frf.get("synth", {}).items():
            ws = np.concatenate([synth.omega_low, synth.omega_high])
            am = np.concatenate([synth.tip_low, synth.tip_high])
            order = np.argsort(ws)
            series[f"synth_F{F}"] = (ws[order], am[order])
        save_plotdata_csv(out / "frf.csv", series)
    if cfg.get("outputs", {}).get("save_windows", False):
        win_dir = out / "windows"
        for i, rec in enumerate(result.records):
            if rec.window is not None:
                save_record_csvs(win_dir, rec.window, f"level{i:03d}")


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

PLOT_FIGURES = {
    "fig2": "responding-mode map over exciter positions (sfb, uniform damping)",
    "fig5": "identified vs EPMC modal properties (needs a run directory)",
    "fig6": "same series layout as fig5 (sfb at node seven)",
    "fig8": "same series layout as fig5 (mfb)",
    "fig9": "fig5 series plus exciter phase-lag series (exciter runs)",
    "fig13": "synthesized + measured frequency-response curves (FRF runs)",
}


def emit_plotdata(figure: str, run_dir=None, model_cfg=None, out_path=None) -> dict:
    """Long-format (series, x, y) plot data mirroring the paper figures.

    fig2 needs only a model config; the rest read a scenario run directory.
    Axes: tip amplitude normalized by beam length, frequency normalized by
    the linear modal frequency, damping in percent, phase in degrees.
    """
    if figure not in PLOT_FIGURES:
        raise ScenarioError(
            f"unknown figure id '{figure}'; available: {sorted(PLOT_FIGURES)}"
        )
    series = {}
    if figure == "fig2":
        params = _beam_params({"model": model_cfg or {}})
        fine = BeamParams(**{**params.__dict__, "n_elements": 70, "friction_node": 3})
        model = assemble_beam(fine)
        stick, _ = limit_models(model)
        basis = linear_modes(stick, 5)
        from .analysis import responding_mode_map

        dofs = model.translation_dofs
        table = responding_mode_map(basis, dofs, model.n_dof, uniform_damping=True)
        xs = model.node_coords
        ys = [t["mode"] for t in table]
        series["responding_mode"] = (xs, ys)
    else:
        run_dir = Path(run_dir)
        if figure == "fig13":
            import csv as _csv

            frf_path = run_dir / "frf.csv"
            if not frf_path.exists():
                raise ScenarioError(f"no frf.csv in {run_dir}")
            with open(frf_path, newline="") as fh:
                reader = _csv.reader(fh)
                next(reader)
                for name, x, y in reader:
                    series.setdefault(name, ([], []))
                    series[name][0].append(float(x))
                    series[name][1].append(float(y))
        else:
            cfg = yaml.safe_load((run_dir / "scenario_echo.yaml").read_text())
            params = _beam_params(cfg)
            model = assemble_beam(params)
            stick, _ = limit_models(model)
            mode = int(cfg.get("excitation", {}).get("mode", 1))
            basis = linear_modes(stick, mode)
            w0 = basis.frequencies[mode - 1]
            length = params.length
            ident = load_backbone_csv(run_dir / "identified.csv")
            series["identified_omega"] = (
                ident["tip_amplitude"] / length,
                ident["omega"] / w0,
            )
            series["identified_zeta"] = (
                ident["tip_amplitude"] / length,
                100.0 * ident["zeta"],
            )
            ref_path = run_dir / "reference.csv"
            if ref_path.exists():
                ref = load_backbone_csv(ref_path)
                series["epmc_omega"] = (
                    ref["tip_amplitude"] / length,
                    ref["omega"] / w0,
                )
                series["epmc_zeta"] = (
                    ref["tip_amplitude"] / length,
                    100.0 * ref["zeta"],
                )
            if figure == "fig9":
                with open(run_dir / "report.summary.json") as fh:
                    summary = json.load(fh)
                lags = [
                    (row.get("tip_amp_m"), ex.get("phase_lag_deg"))
                    for row, ex in zip(
                        _read_report_rows(run_dir / "report.csv"),
                        summary.get("extras", []),
                    )
                    if ex.get("phase_lag_deg") is not None
                    and row.get("tip_amp_m") is not None
                ]
                if lags:
                    xs = np.array([l[0] for l in lags]) / length
                    ys = np.array([l[1] for l in lags])
                    series["exciter_phase_lag_deg"] = (xs, ys)
    if out_path is not None:
        save_plotdata_csv(out_path, series)
    return series


def _read_report_rows(path) -> list:
    import csv as _csv

    rows = []
    with open(path, newline="") as fh:
        reader = _csv.DictReader(fh)
        for row in reader:
            parsed = {}
            for k, v in row.items():
                if k == "classification":
                    parsed[k] = v
                else:
                    try:
                        parsed[k] = float(v)
                    except ValueError:
                        parsed[k] = None
            rows.append(parsed)
    return rows
