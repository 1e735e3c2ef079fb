"""CSV/JSON serialization of backbone data, identified points and records.

One schema serves both the reference solver output and the identified
experimental points, so downstream comparison and plot-data tooling consume
them uniformly: a CSV with columns (a, omega_rad_s, zeta, tip_amp_m) plus a
JSON sidecar holding the complex shape/harmonic data.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

BACKBONE_COLUMNS = ["a", "omega_rad_s", "zeta", "tip_amp_m"]


def _complex_to_pairs(arr) -> list:
    arr = np.asarray(arr)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _pairs_to_complex(data) -> np.ndarray:
    arr = np.asarray(data)
    return arr[..., 0] + 1j * arr[..., 1]


def save_backbone_csv(path, points, metadata: dict | None = None) -> None:
    """Write backbone/identified points as CSV plus a JSON sidecar.

    ``points`` iterates over objects with amplitude/omega/zeta/
    tip_amplitude/shape attributes (BackbonePoint or IdentifiedModalPoint).
    The sidecar (same stem, ``.shapes.json``) carries the complex shapes and,
    when present, the per-DOF harmonic coefficients.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BACKBONE_COLUMNS)
        for p in points:
            writer.writerow(
                [
                    f"{p.amplitude:.12e}",
                    f"{p.omega:.12e}",
                    f"{p.zeta:.12e}",
                    f"{p.tip_amplitude:.12e}",
                ]
            )
    sidecar = {
        "metadata": metadata or {},
        "shapes": [_complex_to_pairs(p.shape) for p in points],
    }
    harmonics = []
    for p in points:
        sol = getattr(p, "harmonics", None)
        coeffs = getattr(p, "coeffs", None) if sol is None else sol.coeffs
        harmonics.append(None if coeffs is None else _complex_to_pairs(coeffs))
    if any(h is not None for h in harmonics):
        sidecar["harmonic_coefficients"] = harmonics
    with open(path.with_suffix(".shapes.json"), "w") as fh:
        json.dump(sidecar, fh)


def load_backbone_csv(path):
    """Read a backbone CSV (+sidecar when present).

    Returns a dict of arrays: a, omega, zeta, tip_amplitude, shapes
    (complex, possibly None), metadata.
    """
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != BACKBONE_COLUMNS:
            raise ValueError(f"unexpected backbone CSV header: {header}")
        for row in reader:
            rows.append([float(v) for v in row])
    data = np.array(rows)
    out = {
        "a": data[:, 0],
        "omega": data[:, 1],
        "zeta": data[:, 2],
        "tip_amplitude": data[:, 3],
        "shapes": None,
        "metadata": {},
    }
    sidecar = path.with_suffix(".shapes.json")
    if sidecar.exists():
        with open(sidecar) as fh:
            extra = json.load(fh)
        out["metadata"] = extra.get("metadata", {})
        if "shapes" in extra:
            out["shapes"] = np.array(
                [_pairs_to_complex(s) for s in extra["shapes"]]
            )
    return out


def save_record_csvs(directory, record, label: str) -> None:
    """Persist one captured window: grouped CSVs plus JSON metadata."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    chans = record.channels
    groups = {
        "force": [k for k in ("time", "force", "forcenoise", "excitation_signal", "pll_freq") if k in chans],
        "velocities": ["time"] + sorted(
            (k for k in chans if k.startswith(("vel_", "velnoise_"))),
        ),
        "displacements": ["time"]
        + sorted((k for k in chans if k.startswith(("disp_", "drive_disp")))),
    }
    for group, names in groups.items():
        cols = [chans[n] for n in names]
        with open(directory / f"{label}_{group}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for row in zip(*cols):
                writer.writerow([f"{v:.10e}" for v in row])
    meta = dict(record.metadata)
    meta["dt"] = record.dt
    meta["channel_map"] = {k: int(v) for k, v in record.channel_map.items()}
    with open(directory / f"{label}_meta.json", "w") as fh:
        json.dump(meta, fh, indent=1)


def config_hash(payload: dict) -> str:
    """Stable hash of a JSON-serializable configuration (cache key)."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def save_comparison_csv(path, rows, summary: dict | None = None) -> None:
    """Comparison report: per-level identified vs reference plus rel errors."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [
        "level",
        "classification",
        "tip_amp_m",
        "omega_id",
        "zeta_id",
        "omega_ref",
        "zeta_ref",
        "omega_rel_err",
        "zeta_rel_err",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in rows:
            writer.writerow(
                [
                    f"{r['level']:.8e}",
                    r["classification"],
                    *(
                        (f"{r[k]:.10e}" if r.get(k) is not None and np.isfinite(r[k]) else "nan")
                        for k in cols[2:]
                    ),
                ]
            )
    if summary is not None:
        with open(path.with_suffix(".summary.json"), "w") as fh:
            json.dump(_jsonable(summary), fh, indent=1)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def save_plotdata_csv(path, series: dict) -> None:
    """Long-format plot data: columns (series, x, y)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "x", "y"])
        for name, (xs, ys) in series.items():
            for x, y in zip(np.asarray(xs), np.asarray(ys)):
                if np.isfinite(x) and np.isfinite(y):
                    writer.writerow([name, f"{x:.10e}", f"{y:.10e}"])
