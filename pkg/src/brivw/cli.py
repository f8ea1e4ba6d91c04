"""Command-line front end: ``estimate``, ``simulate``, ``diagnose``, ``prune``, ``rerun``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import os
import sys
from dataclasses import fields

import numpy as np

from . import __version__
from . import diagnostics as diag
from . import estimators as est
from . import gwas_io
from . import simulation as sim
from .kernels import lambda_from_pvalue
from .rao_blackwell import rao_blackwellize
from .selection import DEFAULT_ETA, DEFAULT_P_THRESHOLD, SelectionConfig, select
from .structure import StructureError, StructureParams, adjust

log = logging.getLogger("brivw")

SEED_ENV = "BRIVW_SEED"
METHOD_NAMES = {m.lower(): m for m in est.METHODS}


class UsageError(Exception):
    """Bad flags or configuration (exit code 2)."""


class StageError(Exception):
    """Runtime failure tagged with the pipeline stage (exit code 1)."""

    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage


def _num(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else None
    return v


def _dumps(obj) -> str:
    # repr() of a float is the shortest round-trip string (<= 17 significant digits)
    def walk(o):
        if isinstance(o, dict):
            return {k: walk(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [walk(v) for v in o]
        if isinstance(o, (np.floating,)):
            return _num(float(o))
        if isinstance(o, (np.integer,)):
            return int(o)
        return _num(o)
    return json.dumps(walk(obj), indent=2, sort_keys=True)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def _methods(text: str):
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        if tok not in METHOD_NAMES:
            raise UsageError(f"unknown method {tok!r}; choose from {', '.join(METHOD_NAMES)}")
        out.append(METHOD_NAMES[tok])
    if not out:
        raise UsageError("no methods given")
    return tuple(m for m in est.METHODS if m in out)


def _write_manifest(path, command, params, stream=None):
    manifest = {"command": command, "params": params, "version": __version__,
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    text = _dumps(manifest) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        (stream or sys.stderr).write(text)


def _manifest_path(args, primary):
    if args.manifest:
        return args.manifest
    return f"{primary}.manifest.json" if primary else None


# ---------------------------------------------------------------------------
# estimate

def _structure(args) -> StructureParams:
    try:
        if args.structure:
            sp = StructureParams.from_file(args.structure)
            if args.inflation_scale != "sd":
                sp = StructureParams(sp.c1, sp.c2, sp.c12, args.inflation_scale)
            return sp
        if args.c12 is None:
            log.warning("--c12 not given: assuming no sample structure (c12 = 0)")
        return StructureParams(args.c1, args.c2, 0.0 if args.c12 is None else args.c12,
                               args.inflation_scale)
    except (StructureError, OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def run_estimate(params: dict, out_stream=sys.stdout) -> dict:
    """Execute the estimate pipeline from a resolved parameter dict; returns the JSON payload."""
    cmap = gwas_io.read_column_map(params["column_map"]) if params["column_map"] else None
    try:
        exposure = gwas_io.parse(params["exposure"], cmap)
        outcome = gwas_io.parse(params["outcome"], cmap)
    except gwas_io.GwasFormatError as exc:
        raise StageError("parse", exc) from None
    try:
        pairs, hreport = gwas_io.harmonize(exposure, outcome,
                                           drop_palindromic=not params["keep_palindromic"])
    except gwas_io.HarmonizationError as exc:
        raise StageError("harmonize", exc) from None
    n_before_prune = len(pairs)
    if params["ld"]:
        try:
            ld = gwas_io.read_ld(params["ld"])
        except gwas_io.GwasFormatError as exc:
            raise StageError("prune", exc) from None
        pairs = gwas_io.sigma_prune(pairs, ld, params["r2_max"], params["window_kb"])
    sp = StructureParams(params["c1"], params["c2"], params["c12"], params["inflation_scale"])
    adjusted = adjust(pairs, sp)
    sel_cfg = SelectionConfig(params["lambda"], params["eta"], params["seed"])
    outcome_sel = select(adjusted, sel_cfg)
    results, errors = {}, {}
    methods = params["methods"]
    baseline = adjusted.subset(np.abs(adjusted.gamma_hat / adjusted.se_gamma) > params["baseline_lambda"])
    for m in methods:
        try:
            if m == "IVW":
                r = est.ivw(baseline.gamma_hat, baseline.Gamma_hat, baseline.se_Gamma,
                            baseline.se_gamma, params["alpha"])
            elif m == "dIVW":
                r = est.divw(baseline.gamma_hat, baseline.se_gamma, baseline.Gamma_hat,
                             baseline.se_Gamma, params["alpha"])
            elif m == "RIVW":
                r = est.rivw(rao_blackwellize(adjusted, outcome_sel.selected, sel_cfg, 0.0),
                             params["alpha"])
            else:
                rec = rao_blackwellize(adjusted, outcome_sel.selected, sel_cfg, sp.rho)
                r = est.brivw(rec, params["alpha"])
                if params["audit"]:
                    rec.to_tsv(params["audit"])
            results[m] = r.to_dict()
        except est.EstimationError as exc:
            errors[m] = f"[estimate] {exc}"
    payload = {
        "results": results, "errors": errors, "rho": sp.rho, "lambda": sel_cfg.lambda_,
        "lambda_p": sel_cfg.p_threshold, "eta": sel_cfg.eta,
        "n_selected": outcome_sel.n_selected,
        "snps": {"exposure_rows": len(exposure), "outcome_rows": len(outcome),
                 "exposure_rejected": len(exposure.rejects), "outcome_rejected": len(outcome.rejects),
                 "overlap": hreport.n_overlap, "harmonized": hreport.n_kept,
                 "flipped": hreport.n_flipped, "dropped": dict(sorted(hreport.dropped.items())),
                 "after_prune": len(pairs), "pruned": n_before_prune - len(pairs),
                 "adjust_rejected": len(adjusted.rejected)},
    }
    return payload


def _print_table(payload, fh):
    fh.write(f"{'method':<7}{'beta':>13}{'se':>12}{'ci_low':>13}{'ci_high':>13}{'p':>12}{'n_iv':>7}\n")
    for m, r in payload["results"].items():
        se = r["se"] if r["se"] is not None else float("nan")
        fh.write(f"{m:<7}{r['beta_hat']:>13.6g}{se:>12.4g}{_f(r['ci_low']):>13}"
                 f"{_f(r['ci_high']):>13}{_f(r['p_value'], '.3g'):>12}{r['n_selected']:>7d}\n")
    for m, e in payload["errors"].items():
        fh.write(f"{m:<7} failed: {e}\n")


def _f(v, spec=".6g"):
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, spec)


def cmd_estimate(args):
    sp = _structure(args)
    if not (0 < args.alpha < 1):
        raise UsageError("--alpha must lie in (0, 1)")
    try:
        lam = lambda_from_pvalue(args.lambda_p)
        base = lambda_from_pvalue(args.baseline_lambda_p) if args.baseline_lambda_p else lam
        SelectionConfig(lam, args.eta, 0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for path in (args.exposure, args.outcome, args.ld, args.column_map, args.structure):
        if path and not os.path.exists(path):
            raise UsageError(f"no such file: {path}")
    params = {
        "exposure": args.exposure, "outcome": args.outcome, "ld": args.ld,
        "column_map": args.column_map, "keep_palindromic": args.keep_palindromic,
        "r2_max": args.r2_max, "window_kb": args.window_kb,
        "c1": sp.c1, "c2": sp.c2, "c12": sp.c12, "inflation_scale": sp.inflation_scale,
        "lambda_p": args.lambda_p, "lambda": lam, "baseline_lambda": base, "eta": args.eta,
        "seed": _seed(args), "methods": list(_methods(args.methods)), "alpha": args.alpha,
        "out": args.out, "audit": args.audit,
    }
    return _estimate_from_params(params, args.manifest, args.json)


def _estimate_from_params(params, manifest=None, as_json=False):
    try:
        payload = run_estimate(params)
    except gwas_io.GwasFormatError as exc:
        raise StageError("parse", exc) from None
    except StructureError as exc:
        raise StageError("adjust", exc) from None
    text = _dumps(payload) + "\n"
    if params["out"]:
        with open(params["out"], "w") as fh:
            fh.write(text)
    if as_json:
        sys.stdout.write(text)
    else:
        _print_table(payload, sys.stdout)
    _write_manifest(manifest or (f"{params['out']}.manifest.json" if params["out"] else None),
                    "estimate", params)
    return 1 if not payload["results"] else 0


# ---------------------------------------------------------------------------
# simulate

_LIST_KEYS = {f.name for f in fields(sim.MixtureConfig)} | {"lambda_p", "eta"}


def read_sim_config(path) -> dict:
    """Parse a ``key = value`` simulation config; comma-separated values form grid axes."""
    conf = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(str(exc)) from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            conf[key.strip()] = val.strip()
    return conf


def _convert(key, text):
    types = {f.name: f.type for f in fields(sim.MixtureConfig)}
    t = types.get(key, "float")
    try:
        if t == "int":
            return int(float(text)) if "e" in text.lower() else int(text)
        if t == "str":
            return text
        return float(text)
    except ValueError:
        raise UsageError(f"bad value for {key}: {text!r}") from None


def build_sim_plan(conf: dict, overrides: dict) -> dict:
    """Resolve a config dict into a fully explicit simulation plan (manifest params)."""
    conf = dict(conf)
    conf.update({k: v for k, v in overrides.items() if v is not None})
    known = _LIST_KEYS | {"replicates", "methods", "alpha", "baseline_lambda_p", "tie_tau2",
                          "tie_pi_y", "workers"}
    unknown = set(conf) - known
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    axes = {}
    for key in sorted(_LIST_KEYS & set(conf)):
        vals = [v.strip() for v in str(conf[key]).split(",") if v.strip()]
        if not vals:
            raise UsageError(f"empty value for {key}")
        axes[key] = [_convert(key, v) for v in vals]
    plan = {
        "axes": axes,
        "replicates": int(conf.get("replicates", 200)),
        "methods": list(_methods(str(conf.get("methods", "ivw,divw,rivw,brivw")))),
        "alpha": float(conf.get("alpha", 0.05)),
        "baseline_lambda_p": (float(conf["baseline_lambda_p"]) if "baseline_lambda_p" in conf
                              else None),
        "tie_tau2": str(conf.get("tie_tau2", "false")).lower() in ("1", "true", "yes"),
        "tie_pi_y": str(conf.get("tie_pi_y", "false")).lower() in ("1", "true", "yes"),
    }
    if "lambda_p" in axes:
        plan["lambda"] = [lambda_from_pvalue(p) for p in axes["lambda_p"]]
    return plan


def plan_cells(plan):
    axes = {k: v for k, v in plan["axes"].items() if k not in ("lambda_p",)}
    if "lambda_p" in plan["axes"]:
        axes["lambda_"] = [lambda_from_pvalue(p) for p in plan["axes"]["lambda_p"]]
    seed_axis = axes.pop("seed", [2024])
    if len(seed_axis) != 1:
        raise UsageError("seed must be a single value")
    try:
        base = sim.MixtureConfig(seed=int(seed_axis[0]), p=200_000)
    except sim.ConfigError as exc:
        raise UsageError(str(exc)) from None
    sel = SelectionConfig(lambda_from_pvalue(DEFAULT_P_THRESHOLD), DEFAULT_ETA, int(seed_axis[0]))
    try:
        cells, excluded = sim.expand_grid(base, sel, tie_tau2=plan["tie_tau2"],
                                          tie_pi_y=plan["tie_pi_y"], **axes)
    except (sim.ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if plan["baseline_lambda_p"] is not None:
        b = lambda_from_pvalue(plan["baseline_lambda_p"]) if plan["baseline_lambda_p"] < 1 else 0.0
        cells = [sim.Cell(c.cfg, c.sel, b) for c in cells]
    return cells, excluded


def cmd_simulate(args):
    conf = read_sim_config(args.config) if args.config else {}
    overrides = {"replicates": args.replicates}
    if args.seed is not None or os.environ.get(SEED_ENV):
        overrides["seed"] = str(_seed(args))
    plan = build_sim_plan(conf, overrides)
    plan["out"] = args.out
    plan["summary"] = args.summary or f"{args.out}.summary.json"
    return _simulate_from_plan(plan, args.workers, args.manifest)


def _simulate_from_plan(plan, workers, manifest=None):
    cells, excluded = plan_cells(plan)
    for combo, why in excluded:
        log.warning("excluded grid cell %s: %s", combo, why)
    if not cells:
        raise UsageError("every grid cell is infeasible")
    try:
        results = sim.sweep(cells, plan["methods"], plan["replicates"], plan["alpha"],
                            workers=workers)
    except sim.ConfigError as exc:
        raise UsageError(str(exc)) from None
    with open(plan["out"], "w", newline="") as fh:
        sim.write_long_csv(results, fh)
    with open(plan["summary"], "w") as fh:
        fh.write(sim.summary_json(results) + "\n")
    _write_manifest(manifest or f"{plan['out']}.manifest.json", "simulate",
                    dict(plan, workers=workers, excluded=[c for c, _ in excluded]))
    return 0


# ---------------------------------------------------------------------------
# diagnose

def cmd_diagnose(args):
    try:
        lam = lambda_from_pvalue(args.lambda_p)
        rhos = [float(v) for v in args.rho.split(",")]
        strengths = [float(v) for v in args.strengths.split(",")]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    scale = lam if args.relative else 1.0
    try:
        params = [diag.Lemma1Params(s * scale, (s * scale) if args.outcome_equals_exposure else args.Gamma,
                                    r, lam, args.eta)
                  for r in rhos for s in strengths]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        diag.write_density_csv(args.out, params)
        if args.bias_out:
            grid = np.linspace(0.0, args.bias_max * lam, args.bias_points)
            with open(args.bias_out, "w") as fh:
                fh.write("rho,gamma_over_sigma,bias\n")
                for r in rhos:
                    for g, b in zip(grid, diag.bias_curve(grid, r, lam, args.eta)):
                        fh.write(f"{r:.17g},{g:.17g},{b:.17g}\n")
    except diag.ConditioningError as exc:
        raise StageError("diagnose", exc) from None
    _write_manifest(args.manifest or f"{args.out}.manifest.json", "diagnose",
                    {"rho": rhos, "strengths": strengths, "relative": args.relative,
                     "lambda_p": args.lambda_p, "lambda": lam, "eta": args.eta,
                     "out": args.out, "bias_out": args.bias_out})
    return 0


# ---------------------------------------------------------------------------
# prune

def cmd_prune(args):
    for path in (args.pairs, args.ld):
        if not os.path.exists(path):
            raise UsageError(f"no such file: {path}")
    try:
        pairs = gwas_io.read_pairs_tsv(args.pairs)
        ld = gwas_io.read_ld(args.ld)
    except (gwas_io.GwasFormatError, KeyError, ValueError) as exc:
        raise StageError("prune", exc) from None
    kept = gwas_io.sigma_prune(pairs, ld, args.r2_max, args.window_kb)
    with open(args.out, "w") as fh:
        gwas_io.write_pairs_tsv(kept, fh)
    _write_manifest(args.manifest or f"{args.out}.manifest.json", "prune",
                    {"pairs": args.pairs, "ld": args.ld, "r2_max": args.r2_max,
                     "window_kb": args.window_kb, "out": args.out,
                     "n_in": len(pairs), "n_out": len(kept)})
    return 0


# ---------------------------------------------------------------------------
# rerun

def cmd_rerun(args):
    try:
        with open(args.manifest_file) as fh:
            manifest = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read manifest: {exc}") from None
    cmd, params = manifest.get("command"), manifest.get("params", {})
    if cmd == "estimate":
        if args.out:
            params["out"] = args.out
        return _estimate_from_params(params, args.manifest, as_json=False)
    if cmd == "simulate":
        if args.out:
            params["out"] = args.out
            params["summary"] = f"{args.out}.summary.json"
        return _simulate_from_plan(params, args.workers or params.get("workers", 1), args.manifest)
    raise UsageError(f"rerun supports estimate and simulate manifests, not {cmd!r}")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brivw", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help=f"random seed (overrides ${SEED_ENV}; default 0)")
        p.add_argument("--manifest", default=None, help="manifest path (default <out>.manifest.json)")

    p = sub.add_parser("estimate", help="estimate a causal effect from two GWAS tables")
    p.add_argument("--exposure", required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--ld", default=None, help="LD pair list; enables sigma-based pruning")
    p.add_argument("--r2-max", type=float, default=0.001)
    p.add_argument("--window-kb", type=float, default=10_000)
    p.add_argument("--column-map", default=None)
    p.add_argument("--keep-palindromic", action="store_true")
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--c12", type=float, default=None)
    p.add_argument("--structure", default=None, help="key=value file with c1, c2, c12")
    p.add_argument("--inflation-scale", choices=("sd", "var"), default="sd")
    p.add_argument("--lambda-p", type=float, default=DEFAULT_P_THRESHOLD,
                   help="selection p-value threshold (lambda = Phi^-1(1 - p/2))")
    p.add_argument("--baseline-lambda-p", type=float, default=None,
                   help="deterministic threshold for IVW/dIVW (default: --lambda-p)")
    p.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p.add_argument("--methods", default="ivw,divw,rivw,brivw")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default=None, help="JSON results file")
    p.add_argument("--audit", default=None, help="per-SNP Rao-Blackwell TSV for BRIVW")
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="Monte Carlo sweep over a parameter grid")
    p.add_argument("--config", default=None, help="key = value file; comma lists become grid axes")
    p.add_argument("--out", required=True, help="long-format CSV")
    p.add_argument("--summary", default=None, help="JSON summary (default <out>.summary.json)")
    p.add_argument("--replicates", default=None)
    p.add_argument("--workers", type=int, default=sim.default_workers())
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="post-selection density and bias curves")
    p.add_argument("--rho", default="-0.3,-0.1,0,0.1,0.3")
    p.add_argument("--strengths", default="0.1,0.5,2", help="instrument strengths gamma/sigma")
    p.add_argument("--absolute", dest="relative", action="store_false",
                   help="strengths are absolute rather than multiples of lambda")
    p.add_argument("--Gamma", type=float, default=0.0,
                   help="Gamma/sigma when --independent-outcome is set")
    p.add_argument("--independent-outcome", dest="outcome_equals_exposure", action="store_false")
    p.add_argument("--lambda-p", type=float, default=DEFAULT_P_THRESHOLD)
    p.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p.add_argument("--out", required=True)
    p.add_argument("--bias-out", default=None)
    p.add_argument("--bias-max", type=float, default=2.0)
    p.add_argument("--bias-points", type=int, default=201)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("prune", help="sigma-based LD pruning of a harmonized SNP table")
    p.add_argument("--pairs", required=True)
    p.add_argument("--ld", required=True)
    p.add_argument("--r2-max", type=float, default=0.001)
    p.add_argument("--window-kb", type=float, default=10_000)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("rerun", help="re-execute an estimate or simulate manifest")
    p.add_argument("manifest_file")
    p.add_argument("--out", default=None, help="redirect the primary output")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"brivw: configuration error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"brivw: error {exc}", file=sys.stderr)
        return 1
    except (sim.ConfigError, StructureError) as exc:
        print(f"brivw: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort stage tag
        print(f"brivw: error [runtime] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
