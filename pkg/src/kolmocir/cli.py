"""Command-line entry point wiring all modules.

Subcommands: sample, u, deriv, gfun, oracle, oracle-compare, verify-pde,
verify-growth, verify-semigroup, mix-audit.  Values resolve in the order
hard default < KOLMOCIR_SEED (seed only) < --config file (flat key=value
lines) < explicit flags.  Every JSON summary embeds the resolved RunConfig
and the tool version, so replaying the embedded config reproduces the run
bit for bit.

Exit codes: 0 success / all checks passed, 1 a verify check failed,
2 invalid usage or contradictory inputs, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import KolmocirError
from .estimators import EstimatorConfig, estimate_mixed, estimate_u
from .gfun import g_deriv, g_deriv_limit_at_zero, g_growth_bound, gfun_args
from .model import CirParams, DerivRequest, parse_fn_spec, validate_params
from .oracle import cir_laplace, cir_moment, cir_u_poly, density_u
from .sampler import sample_besq
from .streams import CHANNEL_MAIN, RngStream, shard_sizes
from .verify import (
    DEFAULT_T_GRID,
    DEFAULT_X_GRID,
    GROWTH_X_GRID,
    mixture_audit,
    oracle_mixed,
    verify_growth,
    verify_pde,
    verify_semigroup,
)

ENV_SEED = "KOLMOCIR_SEED"

CSV_COLUMNS = {
    "sample": ["path", "xi", "a", "b", "value"],
    "sweep": ["t", "x", "j", "i", "mean", "stderr", "oracle", "abs_err"],
    "gfun": ["x", "value", "growth_bound"],
    "oracle-compare": ["f", "t", "x", "mc_mean", "mc_stderr", "oracle", "abs_err", "sigmas"],
    "verify-pde": ["t", "x", "resid_mean", "resid_stderr", "statistic", "oracle_resid"],
    "verify-growth": ["x", "mean", "stderr", "ratio", "envelope_C", "envelope_k"],
    "verify-semigroup": ["x", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "statistic"],
    "mix-audit": ["moment", "empirical", "stderr", "truth", "predicted_mix",
                  "gap", "ci_lo", "ci_hi", "consistent"],
}


class UsageError(Exception):
    """Invalid or contradictory inputs; mapped to exit code 2."""


@dataclass
class RunConfig:
    """Fully resolved, serializable description of one run."""

    command: str
    options: dict

    def to_dict(self) -> dict:
        return {"command": self.command, "options": dict(self.options)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(command=d["command"], options=dict(d["options"]))


# --------------------------------------------------------------------------
# Argument parsing and resolution
# --------------------------------------------------------------------------

_FLOAT_LIST = "float_list"

# dest -> (type tag, hard default); None defaults mean "required if used".
_OPTION_TYPES = {
    "theta": (float, None), "kappa": (float, None), "sigma": (float, None),
    "delta": (float, None), "t": (float, None), "x": (float, None),
    "s": (float, None), "paths": (int, 200_000), "seed": (int, 0),
    "shards": (int, 1), "method": (str, "gamma"), "clock": (str, "cir"),
    "f": (str, None), "j": (int, 0), "i": (int, 0), "l": (int, 0),
    "a": (float, None), "b": (float, 0.0), "p": (int, 1), "lam": (float, 1.0),
    "kind": (str, None), "out": (str, None),
    "x_grid": (_FLOAT_LIST, None), "t_grid": (_FLOAT_LIST, None),
    "paired": (bool, False), "h": (float, None),
}


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from exc


def _add(parser: argparse.ArgumentParser, *names: str) -> None:
    for dest in names:
        tag, _ = _OPTION_TYPES[dest]
        flag = "--" + dest.replace("_", "-")
        if tag is bool:
            parser.add_argument(flag, dest=dest, action=argparse.BooleanOptionalAction,
                                default=None)
        elif tag == _FLOAT_LIST:
            parser.add_argument(flag, dest=dest, type=_float_list, default=None)
        else:
            parser.add_argument(flag, dest=dest, type=tag, default=None)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kolmocir",
        description="CIR/BESQ exact sampling, derivative estimators, PDE checks",
    )
    ap.add_argument("--config", help="flat key=value config file", default=None)
    ap.add_argument("--version", action="version", version=f"kolmocir {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    mc = ["paths", "seed", "shards", "method"]
    model = ["theta", "kappa", "sigma"]

    p = sub.add_parser("sample", help="raw decomposed draws as CSV")
    _add(p, "delta", *model, "t", "x", *mc, "out")

    for name in ("u", "deriv"):
        p = sub.add_parser(name, help=f"Monte-Carlo {name} estimate (JSON or CSV sweep)")
        _add(p, *model, "delta", "t", "x", *mc, "clock", "paired", "f",
             "x_grid", "t_grid", "out")
        if name == "deriv":
            _add(p, "j", "i")

    p = sub.add_parser("gfun", help="symmetrized-quotient derivative values")
    _add(p, "f", "l", "x", "a", "b", "x_grid", "out")

    p = sub.add_parser("oracle", help="closed-form or quadrature ground truth")
    _add(p, "kind", *model, "t", "x", "p", "lam", "f")

    p = sub.add_parser("oracle-compare", help="CSV of MC-vs-oracle rows")
    _add(p, *model, "t", "x", "f", *mc, "clock", "out", "x_grid", "t_grid")

    p = sub.add_parser("verify-pde", help="backward-equation residual check")
    _add(p, *model, "f", *mc, "clock", "t_grid", "x_grid", "out")

    p = sub.add_parser("verify-growth", help="polynomial growth envelope check")
    _add(p, *model, "f", "j", "i", "t", *mc, "clock", "x_grid", "out")

    p = sub.add_parser("verify-semigroup", help="two-stage semigroup identity check")
    _add(p, *model, "f", "t", "s", *mc, "clock", "x_grid", "out")

    p = sub.add_parser("mix-audit", help="affine-mixture moment audit")
    _add(p, "delta", "t", "x", *mc, "out")
    return ap


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, val = line.partition("=")
                values[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    return values


def _coerce(dest: str, raw):
    tag, _ = _OPTION_TYPES[dest]
    if tag is bool:
        if isinstance(raw, bool):
            return raw
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    if tag == _FLOAT_LIST:
        return raw if isinstance(raw, list) else _float_list(raw)
    return tag(raw)


def parse_config(argv: list[str]) -> RunConfig:
    """Parse flags and optional config file into a fully resolved RunConfig."""
    args = _build_parser().parse_args(argv)
    file_values = _read_config_file(args.config) if args.config else {}
    options = {}
    for dest, value in vars(args).items():
        if dest in ("command", "config"):
            continue
        if value is None and dest in file_values:
            try:
                value = _coerce(dest, file_values[dest])
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {dest}: {exc}") from exc
        if value is None and dest == "seed" and os.environ.get(ENV_SEED):
            try:
                value = int(os.environ[ENV_SEED])
            except ValueError as exc:
                raise UsageError(f"bad {ENV_SEED}: {os.environ[ENV_SEED]!r}") from exc
        if value is None:
            value = _OPTION_TYPES[dest][1]
        options[dest] = value
    cfg = RunConfig(command=args.command, options=options)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    o = cfg.options
    try:
        if o.get("theta") is not None or o.get("kappa") is not None or o.get("sigma") is not None:
            if None in (o.get("theta"), o.get("kappa"), o.get("sigma")):
                raise UsageError("provide all of --theta/--kappa/--sigma together")
            validate_params(o["theta"], o["kappa"], o["sigma"])
        if o.get("f") is not None:
            parse_fn_spec(o["f"])
        if o.get("paths") is not None and o["paths"] < 2:
            raise UsageError("--paths must be >= 2")
        if o.get("seed") is not None and not 0 <= o["seed"] < 1 << 64:
            raise UsageError("--seed must be a 64-bit unsigned integer")
    except KolmocirError as exc:
        raise UsageError(str(exc)) from exc


def _params_from(o: dict) -> CirParams:
    if o.get("theta") is None:
        if o.get("delta") is None:
            raise UsageError("provide --theta/--kappa/--sigma or --delta")
        if o.get("clock") == "cir":
            raise UsageError("the cir clock needs --theta/--kappa/--sigma, not just --delta")
        # delta-only runs (besq clock): synthesize coefficients with the right
        # dimension; only delta is consulted on that clock.
        return CirParams(theta=1.0, kappa=o["delta"], sigma=2.0, delta=o["delta"])
    return validate_params(o["theta"], o["kappa"], o["sigma"])


def _estimator_cfg(o: dict) -> EstimatorConfig:
    return EstimatorConfig(
        method=o.get("method") or "gamma",
        paths=o["paths"], seed=o["seed"], shards=o["shards"],
        clock=o.get("clock") or "cir", paired=bool(o.get("paired")),
    )


def _emit_csv(rows: list[dict], columns: list[str], out: str | None) -> None:
    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        return "" if v is None else v

    target = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        writer = csv.writer(target)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c)) for c in columns])
    finally:
        if out:
            target.close()


def _emit_json(payload: dict, cfg: RunConfig) -> None:
    payload = dict(payload)
    payload["version"] = __version__
    payload["config"] = cfg.to_dict()
    print(json.dumps(payload, sort_keys=True))


# --------------------------------------------------------------------------
# Subcommand runners
# --------------------------------------------------------------------------


def _delta_of(o: dict) -> float:
    if o.get("delta") is not None:
        return o["delta"]
    return _params_from(o).delta


def _run_sample(cfg: RunConfig) -> int:
    o = cfg.options
    delta = _delta_of(o)
    t = o.get("t")
    x = o.get("x")
    if t is None or x is None:
        raise UsageError("sample needs --t and --x")
    rows, offset = [], 0
    for shard, size in enumerate(shard_sizes(o["paths"], o["shards"])):
        stream = RngStream(o["seed"], shard, CHANNEL_MAIN)
        s = sample_besq(delta, t, x, stream, size, o["method"])
        for idx in range(size):
            rows.append({
                "path": offset + idx, "xi": float(s.xi[idx]), "a": float(s.a[idx]),
                "b": float(s.b[idx]), "value": float(s.value[idx]),
            })
        offset += size
    _emit_csv(rows, CSV_COLUMNS["sample"], o.get("out"))
    return 0


def _oracle_value(f, params, t, x, req: DerivRequest, clock: str):
    if clock != "cir" or f.kind not in ("poly", "exp_neg"):
        return None
    return oracle_mixed(f, params, t, x, req)


def _run_estimate(cfg: RunConfig) -> int:
    o = cfg.options
    f = parse_fn_spec(o["f"]) if o.get("f") else None
    if f is None:
        raise UsageError(f"{cfg.command} needs --f")
    params = _params_from(o)
    est_cfg = _estimator_cfg(o)
    req = DerivRequest(j=o.get("j") or 0, i=o.get("i") or 0) \
        if cfg.command == "deriv" else DerivRequest(0, 0)

    t_grid = o.get("t_grid")
    x_grid = o.get("x_grid")
    if t_grid or x_grid:
        ts = t_grid or [o.get("t")]
        xs = x_grid or [o.get("x")]
        if None in ts or None in xs:
            raise UsageError("sweep needs --t/--x or the corresponding grid")
        rows = []
        for t in ts:
            for x in xs:
                est = estimate_mixed(f, params, t, x, req, est_cfg)
                oracle = _oracle_value(f, params, t, x, req, est_cfg.clock)
                rows.append({
                    "t": t, "x": x, "j": req.j, "i": req.i,
                    "mean": est.mean, "stderr": est.stderr, "oracle": oracle,
                    "abs_err": None if oracle is None else abs(est.mean - oracle),
                })
        _emit_csv(rows, CSV_COLUMNS["sweep"], o.get("out"))
        return 0

    if o.get("t") is None or o.get("x") is None:
        raise UsageError(f"{cfg.command} needs --t and --x")
    est = estimate_mixed(f, params, o["t"], o["x"], req, est_cfg)
    record = {
        "mean": est.mean, "stderr": est.stderr,
        "paths": est.paths, "seed": est.seed,
    }
    oracle = _oracle_value(f, params, o["t"], o["x"], req, est_cfg.clock)
    if oracle is not None:
        record["oracle"] = oracle
        record["abs_err"] = abs(est.mean - oracle)
    _emit_json(record, cfg)
    return 0


def _run_gfun(cfg: RunConfig) -> int:
    o = cfg.options
    if o.get("f") is None or o.get("a") is None:
        raise UsageError("gfun needs --f and --a")
    f = parse_fn_spec(o["f"])
    l = o.get("l") or 0
    b = o.get("b") or 0.0
    if o.get("x_grid"):
        rows = []
        for x in o["x_grid"]:
            args = gfun_args(x, np.array([o["a"]]), np.array([b]))
            rows.append({
                "x": x,
                "value": float(g_deriv(f, l, args)[0]),
                "growth_bound": float(g_growth_bound(f, l, args)[0]),
            })
        _emit_csv(rows, CSV_COLUMNS["gfun"], o.get("out"))
        return 0
    if o.get("x") is None:
        raise UsageError("gfun needs --x or --x-grid")
    args = gfun_args(o["x"], np.array([o["a"]]), np.array([b]))
    record = {
        "l": l, "x": o["x"], "a": o["a"], "b": b,
        "value": float(g_deriv(f, l, args)[0]),
        "growth_bound": float(g_growth_bound(f, l, args)[0]),
    }
    if o["x"] == 0.0:
        record["limit_at_zero"] = float(np.asarray(g_deriv_limit_at_zero(f, l, o["a"], b)))
    _emit_json(record, cfg)
    return 0


def _run_oracle(cfg: RunConfig) -> int:
    o = cfg.options
    kind = o.get("kind")
    if kind not in ("moment", "laplace", "density"):
        raise UsageError("oracle needs --kind {moment,laplace,density}")
    params = _params_from(o)
    if o.get("t") is None or o.get("x") is None:
        raise UsageError("oracle needs --t and --x")
    if kind == "moment":
        value = cir_moment(params, o["t"], o["x"], o["p"])
    elif kind == "laplace":
        value = cir_laplace(params, o["t"], o["x"], o["lam"])
    else:
        if o.get("f") is None:
            raise UsageError("oracle --kind density needs --f")
        value = density_u(parse_fn_spec(o["f"]), params, o["t"], o["x"])
    print(repr(float(value)))
    return 0


def _run_oracle_compare(cfg: RunConfig) -> int:
    o = cfg.options
    if o.get("f") is None:
        raise UsageError("oracle-compare needs --f")
    f = parse_fn_spec(o["f"])
    params = _params_from(o)
    est_cfg = _estimator_cfg(o)
    ts = o.get("t_grid") or ([o["t"]] if o.get("t") is not None else list(DEFAULT_T_GRID))
    xs = o.get("x_grid") or ([o["x"]] if o.get("x") is not None else list(DEFAULT_X_GRID))
    rows = []
    for t in ts:
        for x in xs:
            est = estimate_u(f, params, t, x, est_cfg)
            if f.kind == "poly":
                oracle = cir_u_poly(f.args, params, t, x)
            elif f.kind == "exp_neg":
                oracle = cir_laplace(params, t, x, f.args[0])
            else:
                oracle = density_u(f, params, t, x)
            err = abs(est.mean - oracle)
            rows.append({
                "f": f.name, "t": t, "x": x, "mc_mean": est.mean,
                "mc_stderr": est.stderr, "oracle": oracle, "abs_err": err,
                "sigmas": err / est.stderr if est.stderr > 0 else 0.0,
            })
    _emit_csv(rows, CSV_COLUMNS["oracle-compare"], o.get("out"))
    return 0


def _run_verify(cfg: RunConfig) -> int:
    o = cfg.options
    est_cfg = _estimator_cfg(o)
    if cfg.command == "mix-audit":
        if o.get("delta") is None or o.get("t") is None or o.get("x") is None:
            raise UsageError("mix-audit needs --delta, --t and --x")
        report = mixture_audit(o["delta"], o["t"], o["x"], est_cfg)
    else:
        if o.get("f") is None:
            raise UsageError(f"{cfg.command} needs --f")
        f = parse_fn_spec(o["f"])
        params = _params_from(o)
        if cfg.command == "verify-pde":
            report = verify_pde(
                f, params, tuple(o.get("t_grid") or DEFAULT_T_GRID),
                tuple(o.get("x_grid") or DEFAULT_X_GRID), est_cfg,
            )
        elif cfg.command == "verify-growth":
            report = verify_growth(
                f, params, DerivRequest(j=o.get("j") or 0, i=o.get("i") or 0),
                tuple(o.get("x_grid") or GROWTH_X_GRID), est_cfg,
                t=o.get("t") if o.get("t") is not None else 0.5,
            )
        else:
            if o.get("t") is None or o.get("s") is None:
                raise UsageError("verify-semigroup needs --t and --s")
            report = verify_semigroup(
                f, params, o["t"], o["s"],
                tuple(o.get("x_grid") or DEFAULT_X_GRID), est_cfg,
            )
    _emit_json(report.to_dict(), cfg)
    if o.get("out"):
        _emit_csv(list(report.rows), CSV_COLUMNS[cfg.command], o["out"])
    return 0 if report.passed else 1


_RUNNERS = {
    "sample": _run_sample,
    "u": _run_estimate,
    "deriv": _run_estimate,
    "gfun": _run_gfun,
    "oracle": _run_oracle,
    "oracle-compare": _run_oracle_compare,
    "verify-pde": _run_verify,
    "verify-growth": _run_verify,
    "verify-semigroup": _run_verify,
    "mix-audit": _run_verify,
}


def run(cfg: RunConfig) -> int:
    """Execute a resolved RunConfig; returns the process exit code."""
    try:
        return _RUNNERS[cfg.command](cfg)
    except UsageError:
        raise
    except (KolmocirError, ValueError) as exc:
        print(f"kolmocir: error: {exc}", file=sys.stderr)
        return 3


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"kolmocir: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except UsageError as exc:
        print(f"kolmocir: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())
