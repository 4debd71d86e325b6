"""Command-line orchestration: tables, exit identities, MC cross-validation.

Subcommands
-----------
``scale-table``   sample a q-scale table to CSV
``exit``          deterministic two-sided exit identities for a potential
``conditional``   conditional Laplace curve given the exit-time supremum
``mc-verify``     deterministic values against Monte Carlo, with z-scores
``local-time``    Laplace transform of the potential-weighted local time

All commands emit a versioned JSON document (``"schema": 1``) to stdout or
``--out``.  A flat ``key = value`` config file provides defaults; explicit
flags override it, and the ``SNLP_SCALE_SEED`` environment variable backs the
seed.  Exit status: 0 on success, 1 on numerical failure (diagnostics JSON on
stdout), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import numpy as np

from .generalized import (
    ExitSpec,
    TailNotConverged,
    conditional_curve,
    evaluate_exit,
    local_time_laplace,
    supremum_atom,
    supremum_density,
)
from .mc import MCConfig, conditional_mc, occupation_mc, run_exit_mc
from .models import Family, LevyModel, RootFindingError
from .potentials import parse_bivariate, parse_g, parse_univariate
from .quadrature import QuadratureError
from .scale import InversionError, make_scale_table

SCHEMA_VERSION = 1

_NUMERICAL_ERRORS = (
    InversionError,
    TailNotConverged,
    RootFindingError,
    QuadratureError,
    ArithmeticError,
    RuntimeError,
)


class UsageError(Exception):
    """Bad flag values; reported with status 2 and the offending flag."""


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def parse_model(text: str) -> LevyModel:
    """``bm:mu,sigma`` or ``jd:mu,sigma,rate,jump_mean``."""
    fam, _, argstr = text.partition(":")
    parts = [p for p in argstr.split(",") if p]
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"--model: non-numeric parameter in '{text}'") from exc
    try:
        if fam == "bm":
            if len(vals) != 2:
                raise UsageError("--model: bm takes mu,sigma")
            return LevyModel(Family.BROWNIAN_DRIFT, vals[0], vals[1])
        if fam == "jd":
            if len(vals) != 4:
                raise UsageError("--model: jd takes mu,sigma,rate,jump_mean")
            return LevyModel(
                Family.EXP_JUMP_DIFFUSION, vals[0], vals[1],
                jump_rate=vals[2], jump_mean=vals[3],
            )
    except ValueError as exc:
        raise UsageError(f"--model: {exc}") from exc
    raise UsageError(f"--model: unknown family '{fam}' (use bm: or jd:)")


def _load_config(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(
                        f"--config: line {lineno} of {path} is not 'key = value'"
                    )
                key, _, value = line.partition("=")
                out[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from exc
    return out


_DEFAULTS = {
    "q": 0.0,
    "potential": "const:0",
    "g": "one",
    "paths": 100000,
    "dt": 1e-4,
    "bridge": True,
    "grid_outer": 129,
    "grid_inner": 1024,
    "b": None,
    "x": None,
    "a": None,
}


def _resolve(args, config: dict, key: str, cast=float, required=False):
    """Flag > config file > built-in default (seed also falls back to env)."""
    val = getattr(args, key, None)
    if val is None and key in config:
        raw = config[key]
        try:
            val = cast(raw) if cast is not bool else raw.lower() in ("1", "true", "yes", "on")
        except ValueError as exc:
            raise UsageError(f"--config: bad value for '{key}': {raw}") from exc
    if val is None:
        val = _DEFAULTS.get(key)
    if val is None and required:
        raise UsageError(f"--{key.replace('_', '-')}: required flag is missing")
    return val


def _resolve_seed(args, config: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in config:
        try:
            return int(config["seed"])
        except ValueError as exc:
            raise UsageError(f"--config: bad seed '{config['seed']}'") from exc
    env = os.environ.get("SNLP_SCALE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"SNLP_SCALE_SEED: bad value '{env}'") from exc
    return 0


def _spec_from(args, config) -> ExitSpec:
    b = _resolve(args, config, "b", required=True)
    x = _resolve(args, config, "x", required=True)
    a = _resolve(args, config, "a", required=True)
    try:
        return ExitSpec(b=b, x=x, a=a)
    except ValueError as exc:
        raise UsageError(f"--b/--x/--a: {exc}") from exc


def _model_from(args, config) -> LevyModel:
    text = getattr(args, "model", None) or config.get("model")
    if text is None:
        raise UsageError("--model: required flag is missing")
    return parse_model(text)


def _emit(doc: dict, out_path: Optional[str]) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_scale_table(args, config) -> dict:
    model = _model_from(args, config)
    q = _resolve(args, config, "q")
    hi = _resolve(args, config, "a", required=True)
    n = int(_resolve(args, config, "grid_inner", cast=int))
    if q < 0:
        raise UsageError("--q: must be >= 0")
    if hi <= 0:
        raise UsageError("--a: table upper limit must be > 0")
    table = make_scale_table(model, q, hi, n)
    table.validate()
    doc = {
        "schema": SCHEMA_VERSION,
        "command": "scale-table",
        "model": model.to_dict(),
        "q": q,
        "grid": {"lo": table.grid_lo, "hi": table.grid_hi, "n": table.n},
        "normalization_note": table.normalization_note,
    }
    if args.csv:
        table.to_csv(args.csv)
        doc["csv"] = args.csv
    else:
        doc["csv_inline"] = table.to_csv_string()
    return doc


def _cmd_exit(args, config) -> dict:
    model = _model_from(args, config)
    spec = _spec_from(args, config)
    pot_spec = _resolve(args, config, "potential", cast=str)
    g_spec = _resolve(args, config, "g", cast=str)
    try:
        F = parse_bivariate(pot_spec, spec.a - spec.b)
        g = parse_g(g_spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    n_outer = int(_resolve(args, config, "grid_outer", cast=int))
    n_inner = int(_resolve(args, config, "grid_inner", cast=int))
    result = evaluate_exit(model, F, spec, g=g, n_outer=n_outer, n_inner=n_inner)
    doc = result.to_json_dict()
    doc.update(
        {
            "schema": SCHEMA_VERSION,
            "command": "exit",
            "model": model.to_dict(),
            "spec": {"b": spec.b, "x": spec.x, "a": spec.a},
            "potential": pot_spec,
            "g": g_spec,
        }
    )
    return doc


def _cmd_conditional(args, config) -> dict:
    model = _model_from(args, config)
    spec = _spec_from(args, config)
    pot_spec = _resolve(args, config, "potential", cast=str)
    try:
        F = parse_bivariate(pot_spec, spec.a - spec.b)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    n_outer = int(_resolve(args, config, "grid_outer", cast=int))
    n_inner = int(_resolve(args, config, "grid_inner", cast=int))
    nodes, curve = conditional_curve(model, F, spec, n_outer=n_outer, n_inner=n_inner)
    density = [
        supremum_density(model, spec, float(z)) if z < spec.a else None for z in nodes
    ]
    doc = {
        "schema": SCHEMA_VERSION,
        "command": "conditional",
        "model": model.to_dict(),
        "spec": {"b": spec.b, "x": spec.x, "a": spec.a},
        "potential": pot_spec,
        "z": [float(z) for z in nodes],
        "conditional_laplace": [float(v) for v in curve],
        "supremum_density": density,
        "supremum_atom": supremum_atom(model, spec),
    }
    if getattr(args, "paths", None):
        cfg = MCConfig(
            dt=_resolve(args, config, "dt"),
            n_paths=int(args.paths),
            seed=_resolve_seed(args, config),
            bridge_correction=_resolve(args, config, "bridge", cast=bool),
        )
        n_bins = max(4, (n_outer - 1) // 16)
        mc = conditional_mc(model, F, spec, cfg, n_bins)
        doc["mc_bins"] = [
            {
                "lo": bn.lo, "hi": bn.hi, "midpoint": bn.midpoint, "n": bn.n,
                "mc_mean": bn.mc_mean, "mc_se": bn.mc_se,
                "deterministic": bn.deterministic, "empty": bn.empty,
            }
            for bn in mc.bins + [mc.up_bin]
        ]
    return doc


def verify_report(deterministic: dict, mc_estimates: dict) -> dict:
    """Per-estimand z-scores ``(det - mc_mean)/se`` with a |z| < 3 gate.

    Raises:
        ValueError: when the estimand sets differ or the MC set is empty.
    """
    if not mc_estimates:
        raise ValueError("verify_report: empty Monte Carlo estimate set")
    if set(deterministic) != set(mc_estimates):
        raise ValueError(
            f"verify_report: estimand sets differ: {sorted(deterministic)} "
            f"vs {sorted(mc_estimates)}"
        )
    rows = []
    for name in sorted(deterministic):
        det = float(deterministic[name])
        est = mc_estimates[name]
        se = est.std_error
        z = 0.0 if det == est.mean else (det - est.mean) / se
        rows.append(
            {
                "estimand": name,
                "deterministic": det,
                "mc_mean": est.mean,
                "mc_se": se,
                "zscore": z,
                "pass": bool(abs(z) < 3.0),
            }
        )
    return {"rows": rows, "pass": all(r["pass"] for r in rows)}


def _cmd_mc_verify(args, config) -> dict:
    model = _model_from(args, config)
    spec = _spec_from(args, config)
    pot_spec = _resolve(args, config, "potential", cast=str)
    g_spec = _resolve(args, config, "g", cast=str)
    try:
        F = parse_bivariate(pot_spec, spec.a - spec.b)
        g = parse_g(g_spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    n_outer = int(_resolve(args, config, "grid_outer", cast=int))
    n_inner = int(_resolve(args, config, "grid_inner", cast=int))
    try:
        cfg = MCConfig(
            dt=_resolve(args, config, "dt"),
            n_paths=int(_resolve(args, config, "paths", cast=int)),
            seed=_resolve_seed(args, config),
            bridge_correction=_resolve(args, config, "bridge", cast=bool),
        )
    except ValueError as exc:
        raise UsageError(f"--paths/--dt: {exc}") from exc

    det_result = evaluate_exit(model, F, spec, g=g, n_outer=n_outer, n_inner=n_inner)
    det = {
        "up_laplace": det_result.up_laplace,
        "down_value": det_result.down_value,
        "p_up": supremum_atom(model, spec),
    }
    mc = run_exit_mc(model, F, spec, cfg, g=g, keep_samples=bool(args.csv))
    report = verify_report(
        det, {"up_laplace": mc.up_laplace, "down_value": mc.down_value, "p_up": mc.p_up}
    )
    doc = {
        "schema": SCHEMA_VERSION,
        "command": "mc-verify",
        "model": model.to_dict(),
        "spec": {"b": spec.b, "x": spec.x, "a": spec.a},
        "potential": pot_spec,
        "g": g_spec,
        "mc_config": {
            "dt": cfg.dt, "paths": cfg.n_paths, "seed": cfg.seed,
            "bridge": cfg.bridge_correction,
        },
        "n_censored": mc.n_censored,
        "report": report["rows"],
        "pass": report["pass"],
        "diagnostics": det_result.diagnostics,
    }
    if args.csv:
        mc.samples.to_csv(args.csv)
        doc["csv"] = args.csv
    return doc


def _cmd_local_time(args, config) -> dict:
    model = _model_from(args, config)
    spec = _spec_from(args, config)
    pot_spec = _resolve(args, config, "potential", cast=str)
    try:
        f_x = parse_univariate(pot_spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    n_outer = int(_resolve(args, config, "grid_outer", cast=int))
    n_inner = int(_resolve(args, config, "grid_inner", cast=int))
    value = local_time_laplace(model, f_x, spec, n_outer=n_outer, n_inner=n_inner)
    doc = {
        "schema": SCHEMA_VERSION,
        "command": "local-time",
        "model": model.to_dict(),
        "spec": {"b": spec.b, "x": spec.x, "a": spec.a},
        "potential": pot_spec,
        "laplace": value,
    }
    if getattr(args, "paths", None):
        cfg = MCConfig(
            dt=_resolve(args, config, "dt"),
            n_paths=int(args.paths),
            seed=_resolve_seed(args, config),
            bridge_correction=_resolve(args, config, "bridge", cast=bool),
        )
        occ = occupation_mc(model, f_x, spec, cfg, n_levels=33)
        report = verify_report(
            {"local_time_laplace": value}, {"local_time_laplace": occ.time_integral_laplace}
        )
        doc["mc"] = {
            "time_integral": {
                "mean": occ.time_integral_laplace.mean,
                "se": occ.time_integral_laplace.std_error,
            },
            "occupation_integral": {
                "mean": occ.occupation_laplace.mean,
                "se": occ.occupation_laplace.std_error,
            },
            "mean_abs_discrepancy": occ.mean_abs_discrepancy,
        }
        doc["report"] = report["rows"]
        doc["pass"] = report["pass"]
    return doc


# ---------------------------------------------------------------------------
# Parser assembly and dispatch
# ---------------------------------------------------------------------------


def _add_common(p, mc_flags=False):
    p.add_argument("--model", help="bm:mu,sigma or jd:mu,sigma,rate,jump_mean")
    p.add_argument("--b", type=float, help="lower barrier")
    p.add_argument("--x", type=float, help="starting point, b < x < a")
    p.add_argument("--a", type=float, help="upper barrier")
    p.add_argument("--grid-outer", dest="grid_outer", type=int,
                   help="outer Simpson node count (odd)")
    p.add_argument("--grid-inner", dest="grid_inner", type=int,
                   help="inner renewal-solve grid intervals")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--config", help="flat key = value config file with defaults")
    p.add_argument("--csv", help="write the command's CSV artifact here")
    if mc_flags:
        p.add_argument("--paths", type=int, help="Monte Carlo path count")
        p.add_argument("--dt", type=float, help="Euler step")
        p.add_argument("--seed", type=int, help="RNG seed (SNLP_SCALE_SEED fallback)")
        p.add_argument("--bridge", action=argparse.BooleanOptionalAction, default=None,
                       help="Brownian-bridge barrier correction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snlp-scale",
        description="Scale functions and exit identities for spectrally "
        "negative Levy processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scale-table", help="sample a q-scale table to CSV")
    _add_common(p)
    p.add_argument("--q", type=float, help="discount rate of the table")

    p = sub.add_parser("exit", help="deterministic two-sided exit identities")
    _add_common(p)
    p.add_argument("--potential", help="const:q | reflected:c | indicator:c,r | level:c,r")
    p.add_argument("--g", help="supremum weight at the down exit: one | identity | const:c")

    p = sub.add_parser("conditional", help="conditional Laplace curve given the supremum")
    _add_common(p, mc_flags=True)
    p.add_argument("--potential", help="const:q | reflected:c | indicator:c,r | level:c,r")

    p = sub.add_parser("mc-verify", help="deterministic vs Monte Carlo with z-scores")
    _add_common(p, mc_flags=True)
    p.add_argument("--potential", help="const:q | reflected:c | indicator:c,r | level:c,r")
    p.add_argument("--g", help="supremum weight at the down exit: one | identity | const:c")

    p = sub.add_parser("local-time", help="potential-weighted local time Laplace transform")
    _add_common(p, mc_flags=True)
    p.add_argument("--potential", help="position-only potential: const:q | level:c,r")
    return parser


_COMMANDS = {
    "scale-table": _cmd_scale_table,
    "exit": _cmd_exit,
    "conditional": _cmd_conditional,
    "mc-verify": _cmd_mc_verify,
    "local-time": _cmd_local_time,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config) if args.config else {}
        doc = _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        _emit(
            {
                "schema": SCHEMA_VERSION,
                "command": args.command,
                "error": type(exc).__name__,
                "detail": str(exc),
            },
            getattr(args, "out", None),
        )
        return 1
    _emit(doc, args.out)
    if args.command in ("mc-verify", "local-time") and doc.get("pass") is False:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
