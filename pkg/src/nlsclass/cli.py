"""Command-line front end.

    nlsclass verify-tables [--gamma Q ...]
    nlsclass classify   --gamma Q --potential S [--bindings nu=1/2,...]
    nlsclass symmetries --gamma Q --potential S [--ansatz A]
    nlsclass transform  --gamma Q --potential S --map JSON
    nlsclass bracket    --q1 F --q2 F
    nlsclass dump-catalog

Every command writes one report.  In json mode it is a single JSON document
(keys sorted, no timings) so equal configurations give identical bytes.
Exit status: 0 when every check passes, 1 when a check fails or an
engine error is reported in-band, 2 for invalid configuration.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from . import exprcore as ec
from .classifier import classify
from .equiv import EquivMap, apply_to_potential
from .errors import NLSClassError, ParseError
from .invariance import STANDARD_ANSATZ, AnsatzSpace, ModelParams, Potential, solve_symmetries
from .liealg import VectorField, bracket
from .tables import catalog_text, verify_all

SCHEMA = "nlsclass-report/1"
COMMANDS = ("verify-tables", "classify", "symmetries", "transform", "bracket", "dump-catalog")
TOLERANCE_ENV = "NLSCLASS_TOLERANCE"
DEFAULT_GAMMAS = ("1", "2", "3", "4", "6", "-2")
_RATIONAL = re.compile(r"^\s*-?\d+(\s*/\s*\d+)?\s*$")


class ConfigError(ValueError):
    pass


def _rational(text: str, what: str) -> Fraction:
    if not _RATIONAL.match(str(text)):
        raise ConfigError(f"{what} must be an exact rational p/q, got {text!r}")
    value = Fraction(str(text).replace(" ", ""))
    return value


@dataclass
class RunConfig:
    command: str
    gamma: list = field(default_factory=list)
    potential_text: str = ""
    bindings: dict = field(default_factory=dict)
    ansatz_spec: str = ""
    transform_spec: str = ""
    q1: str = ""
    q2: str = ""
    seed: int = 0
    tolerance: float = ec.DEFAULT_TOLERANCE
    output_format: str = "json"
    workers: int = 1

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for g in self.gamma:
            if g == 0:
                raise ConfigError("gamma must be nonzero")
        if self.command in ("classify", "symmetries", "transform"):
            if len(self.gamma) != 1:
                raise ConfigError(f"{self.command} needs exactly one --gamma")
            if not self.potential_text:
                raise ConfigError(f"{self.command} needs --potential")
        if self.command == "transform" and not self.transform_spec:
            raise ConfigError("transform needs --map")
        if self.command == "bracket" and not (self.q1 and self.q2):
            raise ConfigError("bracket needs --q1 and --q2")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if self.output_format not in ("json", "text"):
            raise ConfigError("format must be json or text")

    def to_dict(self) -> dict:
        d = {"command": self.command, "seed": self.seed, "tolerance": self.tolerance}
        if self.gamma:
            d["gamma"] = [str(g) for g in self.gamma]
        if self.potential_text:
            d["potential"] = self.potential_text
        if self.bindings:
            d["bindings"] = {k: str(v) for k, v in sorted(self.bindings.items())}
        if self.ansatz_spec:
            d["ansatz"] = self.ansatz_spec
        if self.transform_spec:
            d["map"] = self.transform_spec
        if self.q1 or self.q2:
            d["q1"], d["q2"] = self.q1, self.q2
        return d


def parse_bindings(text: str) -> dict:
    out = {}
    for chunk in filter(None, (c.strip() for c in (text or "").split(","))):
        name, sep, value = chunk.partition("=")
        if not sep or not name.strip():
            raise ConfigError(f"binding {chunk!r} is not name=value")
        out[name.strip()] = _rational(value, f"binding {name.strip()}")
    return out


# --------------------------------------------------------------------------
# commands

def _verify_tables(cfg: RunConfig) -> tuple[bool, dict]:
    params = [ModelParams(g) for g in cfg.gamma] if cfg.gamma else [ModelParams(g) for g in DEFAULT_GAMMAS]
    summary = verify_all(params, seed=cfg.seed, workers=cfg.workers, tolerance=cfg.tolerance)
    return summary.passed, summary.to_dict()


def _model_and_potential(cfg: RunConfig):
    p = ModelParams(cfg.gamma[0])
    names = dict(p.bindings())
    names.update(cfg.bindings)
    return p, Potential(ec.parse(cfg.potential_text, names))


def _classify(cfg: RunConfig) -> tuple[bool, dict]:
    p, pot = _model_and_potential(cfg)
    res = classify(p, pot, seed=cfg.seed, tolerance=cfg.tolerance)
    ok = res.check is None or res.check["verdict"] in ("ProvedZero", "ProbablyZero")
    return ok, res.to_dict()


def _symmetries(cfg: RunConfig) -> tuple[bool, dict]:
    p, pot = _model_and_potential(cfg)
    ansatz = AnsatzSpace.parse(cfg.ansatz_spec) if cfg.ansatz_spec else STANDARD_ANSATZ
    plan = ec.SamplePlan.for_exprs(pot.expr, seed=cfg.seed, tolerance=cfg.tolerance)
    basis = solve_symmetries(p, pot, ansatz, plan)
    d = basis.to_dict()
    d["ansatz"] = str(ansatz)
    d["potential"] = ec.format_expr(pot.expr)
    return not basis.warnings, d


def _transform(cfg: RunConfig) -> tuple[bool, dict]:
    p, pot = _model_and_potential(cfg)
    names = dict(p.bindings())
    names.update(cfg.bindings)
    m = EquivMap.from_json(cfg.transform_spec, names)
    out = apply_to_potential(m, p, pot)
    return True, {"map": m.to_dict(), "potential": ec.format_expr(pot.expr),
                  "transformed": ec.format_expr(out.expr)}


def _bracket(cfg: RunConfig) -> tuple[bool, dict]:
    q1, q2 = VectorField.parse(cfg.q1), VectorField.parse(cfg.q2)
    return True, {"q1": str(q1), "q2": str(q2), "bracket": str(bracket(q1, q2))}


def _dump_catalog(cfg: RunConfig) -> tuple[bool, dict]:
    return True, json.loads(catalog_text())


_HANDLERS = {"verify-tables": _verify_tables, "classify": _classify, "symmetries": _symmetries,
             "transform": _transform, "bracket": _bracket, "dump-catalog": _dump_catalog}


def run(cfg: RunConfig) -> tuple[int, str]:
    """Execute ``cfg``; returns (exit status, report text)."""
    cfg.validate()
    try:
        ok, result = _HANDLERS[cfg.command](cfg)
        error = None
    except ParseError as exc:
        raise ConfigError(str(exc)) from exc
    except NLSClassError as exc:
        ok, result, error = False, None, {"type": type(exc).__name__, "message": str(exc)}
    report = {"schema": SCHEMA, "config": cfg.to_dict(), "ok": ok, "result": result}
    if error is not None:
        report["error"] = error
    if cfg.output_format == "json":
        text = json.dumps(_clean(report), sort_keys=True, indent=2, default=str, allow_nan=False)
    else:
        text = _as_text(cfg, report)
    return (0 if ok else 1), text


def _clean(obj):
    """Non-finite floats become strings so the report stays strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _as_text(cfg: RunConfig, report: dict) -> str:
    lines = [f"{cfg.command}: {'ok' if report['ok'] else 'FAILED'}"]
    if "error" in report:
        lines.append(f"error: {report['error']['type']}: {report['error']['message']}")
        return "\n".join(lines)
    r = report["result"]
    if cfg.command == "verify-tables":
        lines.append(f"{r['n_instances']} case instances, {r['n_failed']} failed")
        for f in r["failures"]:
            lines.append(f"  {f['case']} gamma={f['gamma']} {f['bindings']}: {f['check']}")
    elif cfg.command == "classify":
        lines.append(f"case {r['case']} {r['bindings']}")
        if r["canon"] is not None:
            lines.append(f"canon {r['canon']} -> {r['canonical_case']} {r['canonical_bindings']}")
        lines.append(f"grade {r['grade']}")
        lines.extend(f"note: {n}" for n in r["notes"])
    elif cfg.command == "symmetries":
        lines.append(f"dimension {r['dimension']}")
        lines.extend(f"  {q}" for q in r["basis"])
    elif cfg.command == "transform":
        lines.append(r["transformed"])
    elif cfg.command == "bracket":
        lines.append(r["bracket"])
    else:
        lines.append(json.dumps(r, sort_keys=True, indent=2))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# argument handling

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [nlsclass] section (same keys as the flags)")
    common.add_argument("--gamma", action="append", help="power gamma as p/q (repeatable for verify-tables)")
    common.add_argument("--seed", type=int, help="seed of every sample plan (default 0)")
    common.add_argument("--tolerance", type=float,
                        help=f"zero-test tolerance (default 1e-9, or ${TOLERANCE_ENV})")
    common.add_argument("--format", dest="output_format", choices=("json", "text"))
    common.add_argument("--potential")
    common.add_argument("--bindings", help="parameter values, e.g. nu=1/2,a=1")
    common.add_argument("--ansatz", help='e.g. "xi=1,t,t^2;chi=1,t;lam=1"')
    common.add_argument("--map", help='EquivMap JSON, e.g. \'{"T": "-exp(-4*t)"}\'')
    common.add_argument("--q1")
    common.add_argument("--q2")
    common.add_argument("--workers", type=int, help="processes for verify-tables")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="nlsclass", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _from_ini(path: str) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError(f"cannot read config file {path!r}")
    if "nlsclass" not in cp:
        raise ConfigError(f"config file {path!r} has no [nlsclass] section")
    return dict(cp["nlsclass"])


def config_from_args(argv: Sequence[str] | None = None, environ=None) -> RunConfig:
    """Flags override the config file, which overrides the environment."""
    environ = os.environ if environ is None else environ
    ns = build_parser().parse_args(argv)
    ini = _from_ini(ns.config) if ns.config else {}

    def pick(flag, key, default=None):
        return flag if flag is not None else ini.get(key, default)

    gammas = ns.gamma if ns.gamma else [g for g in re.split(r"[,\s]+", ini.get("gamma", "")) if g]
    tol_default = environ.get(TOLERANCE_ENV, ec.DEFAULT_TOLERANCE)
    try:
        tolerance = float(pick(ns.tolerance, "tolerance", tol_default))
        seed = int(pick(ns.seed, "seed", 0))
        workers = int(pick(ns.workers, "workers", 1))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig(
        command=ns.command,
        gamma=[_rational(g, "gamma") for g in gammas],
        potential_text=pick(ns.potential, "potential", ""),
        bindings=parse_bindings(pick(ns.bindings, "bindings", "")),
        ansatz_spec=pick(ns.ansatz, "ansatz", ""),
        transform_spec=pick(ns.map, "map", ""),
        q1=pick(ns.q1, "q1", ""),
        q2=pick(ns.q2, "q2", ""),
        seed=seed,
        tolerance=tolerance,
        output_format=pick(ns.output_format, "format", "json"),
        workers=workers,
    )
    if ns.verbose:
        logging.basicConfig(level=logging.INFO)
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
        code, text = run(cfg)
    except ConfigError as exc:
        print(f"nlsclass: configuration error: {exc}", file=sys.stderr)
        return 2
    print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
