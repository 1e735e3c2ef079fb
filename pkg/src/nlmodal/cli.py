"""Command-line front end: reference, run, compare, plotdata, list-scenarios."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .analysis import interpolate_backbone
from .beam import BeamParams
from .io import load_backbone_csv, save_comparison_csv
from .scenario import (
    PLOT_FIGURES,
    ScenarioError,
    bundled_scenarios,
    compute_reference,
    emit_plotdata,
    reference_interpolant,
    run_scenario,
)


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None, help="override scenario seed")
    parser.add_argument("--cache-dir", default=None, help="reference cache directory")


def _cmd_reference(args) -> int:
    model_cfg = {}
    if args.config:
        raw = yaml.safe_load(Path(args.config).read_text()) or {}
        model_cfg = raw.get("model", raw)
    params = BeamParams.from_dict(model_cfg)
    data, cache_file = compute_reference(
        params,
        args.mode,
        (args.tip_min, args.tip_max),
        n_harmonics=args.harmonics,
        points_per_decade=args.points_per_decade,
        cache_dir=args.cache_dir,
    )
    out = Path(args.out) if args.out else None
    if out:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(Path(cache_file).read_bytes())
        sidecar = Path(cache_file).with_suffix(".shapes.json")
        if sidecar.exists():
            out.with_suffix(".shapes.json").write_bytes(sidecar.read_bytes())
        print(f"reference written to {out}")
    drop = 100 * (1 - data["omega"].min() / data["omega"].max())
    print(
        f"mode {args.mode}: {len(data['a'])} points, "
        f"omega {data['omega'].max():.2f}..{data['omega'].min():.2f} rad/s "
        f"(drop {drop:.1f} %), peak zeta {100 * data['zeta'].max():.2f} % "
        f"[cache {cache_file}]"
    )
    return 0


def _cmd_run(args) -> int:
    source = args.config
    bundled = bundled_scenarios()
    if not Path(source).exists() and source in bundled:
        source = yaml.safe_load(bundled[source])
    result = run_scenario(
        source, out_dir=args.out, seed=args.seed, cache_dir=args.cache_dir
    )
    s = result.summary
    print(
        f"{s['name']}: {s['n_levels']} levels, {s['n_periodic']} periodic, "
        f"{s['n_not_converged']} not converged"
    )
    if s["n_compared"]:
        print(
            f"  vs reference: omega within {100 * s['omega_rel_tol']:.1f}% at "
            f"{s['omega_within_tol']}/{s['n_compared']}, zeta within "
            f"{100 * s['zeta_rel_tol']:.0f}% at {s['zeta_within_tol']}/{s['n_compared']}"
        )
    if args.out:
        print(f"  artifacts in {args.out}")
    if args.strict and s["n_not_converged"] > 0:
        print("strict mode: not-converged records present", file=sys.stderr)
        return 1
    return 0


def _cmd_compare(args) -> int:
    ident = load_backbone_csv(args.identified)
    ref = load_backbone_csv(args.reference)
    interp = reference_interpolant(ref)
    rows = []
    within_om = within_ze = compared = 0
    for i in range(len(ident["a"])):
        tip = ident["tip_amplitude"][i]
        row = {
            "level": float(i),
            "classification": "periodic",
            "tip_amp_m": tip,
            "omega_id": ident["omega"][i],
            "zeta_id": ident["zeta"][i],
            "omega_ref": None,
            "zeta_ref": None,
            "omega_rel_err": None,
            "zeta_rel_err": None,
        }
        if interp.in_range_tip(tip):
            refv = interp.at_tip_amplitude(tip)
            row["omega_ref"] = float(refv["omega"])
            row["zeta_ref"] = float(refv["zeta"])
            row["omega_rel_err"] = (row["omega_id"] - row["omega_ref"]) / row["omega_ref"]
            row["zeta_rel_err"] = (row["zeta_id"] - row["zeta_ref"]) / row["zeta_ref"]
            compared += 1
            within_om += abs(row["omega_rel_err"]) <= args.omega_tol
            within_ze += abs(row["zeta_rel_err"]) <= args.zeta_tol
        rows.append(row)
    summary = {
        "n_compared": compared,
        "omega_within_tol": within_om,
        "zeta_within_tol": within_ze,
        "omega_rel_tol": args.omega_tol,
        "zeta_rel_tol": args.zeta_tol,
    }
    if args.out:
        save_comparison_csv(args.out, rows, summary)
        print(f"report written to {args.out}")
    print(json.dumps(summary, indent=1))
    return 0


def _cmd_plotdata(args) -> int:
    try:
        series = emit_plotdata(
            args.figure,
            run_dir=args.run,
            model_cfg=yaml.safe_load(Path(args.config).read_text()).get("model")
            if args.config
            else None,
            out_path=args.out,
        )
    except ScenarioError as err:
        print(err, file=sys.stderr)
        return 2
    for name, (xs, ys) in series.items():
        print(f"series {name}: {len(np.atleast_1d(xs))} points")
    if args.out:
        print(f"plot data written to {args.out}")
    return 0


def _cmd_list_scenarios(_args) -> int:
    for name, text in bundled_scenarios().items():
        cfg = yaml.safe_load(text)
        print(f"{name:32s} {cfg.get('description', '')}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nlmodal",
        description="Virtual nonlinear modal testing of a friction-damped beam",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ref = sub.add_parser("reference", help="compute/cache an EPMC reference backbone")
    p_ref.add_argument("--config", help="scenario or model YAML (model section used)")
    p_ref.add_argument("--mode", type=int, default=1)
    p_ref.add_argument("--tip-min", type=float, default=1e-7)
    p_ref.add_argument("--tip-max", type=float, default=3e-3)
    p_ref.add_argument("--harmonics", type=int, default=13)
    p_ref.add_argument("--points-per-decade", type=int, default=20)
    p_ref.add_argument("--out", default=None)
    _add_common(p_ref)
    p_ref.set_defaults(func=_cmd_reference)

    p_run = sub.add_parser("run", help="run a scenario (file path or bundled name)")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--strict", action="store_true")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="compare identified points to a reference")
    p_cmp.add_argument("--identified", required=True)
    p_cmp.add_argument("--reference", required=True)
    p_cmp.add_argument("--out", default=None)
    p_cmp.add_argument("--omega-tol", type=float, default=0.01)
    p_cmp.add_argument("--zeta-tol", type=float, default=0.15)
    p_cmp.set_defaults(func=_cmd_compare)

    p_plot = sub.add_parser("plotdata", help="emit figure-style plot CSVs")
    p_plot.add_argument("--figure", required=True, help=f"one of {sorted(PLOT_FIGURES)}")
    p_plot.add_argument("--run", default=None, help="scenario run directory")
    p_plot.add_argument("--config", default=None, help="model YAML (fig2)")
    p_plot.add_argument("--out", default=None)
    p_plot.set_defaults(func=_cmd_plotdata)

    p_ls = sub.add_parser("list-scenarios", help="list bundled scenarios")
    p_ls.set_defaults(func=_cmd_list_scenarios)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
