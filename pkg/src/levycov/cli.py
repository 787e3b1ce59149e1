"""Command-line front end: ``levycov <subcommand> --config PLAN.json --out DIR``.

Exit status is 0 on success, 1 when the configuration or inputs fail
validation, and 2 when a numerical or runtime error occurs.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import jsonschema

from . import estimators as est
from .harness import (
    BenchmarkReport,
    ClassMembershipError,
    ExperimentPlan,
    RateTarget,
    fit_rate,
    run_experiment,
)
from .model import ClassParams, LevyModelSpec, ModelError, check_class_membership
from .simulate import PathSample, SimulationConfig, simulate_path

logger = logging.getLogger("levycov")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_int = {"type": "integer"}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["brownian"],
    "properties": {
        "brownian": {
            "type": "object",
            "required": ["sigma1", "sigma2", "rho"],
            "properties": {"sigma1": _num, "sigma2": _num, "rho": _num},
            "additionalProperties": False,
        },
        "jumps": {
            "type": ["object", "null"],
            "required": ["r1", "r2"],
            "properties": {"r1": _num, "r2": _num, "c1": _num, "c2": _num, "gamma": _num,
                           "symmetric": {"type": "boolean"}},
            "additionalProperties": False,
        },
        "drift": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
    },
    "additionalProperties": False,
}

SIM_SCHEMA = {
    "type": ["object", "null"],
    "properties": {
        "jump_truncation_eps": _num,
        "small_jump_policy": {"enum": ["discard", "gaussian_approximation"]},
        "max_series_terms": _int,
    },
    "additionalProperties": False,
}

ESTIMATOR_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["spectral", "trc", "rc"]}, "M": _num, "r": _opt_num,
                   "u_override": _opt_num, "u_exp": _num, "name": {"type": "string"}},
    "additionalProperties": False,
}

PLAN_SCHEMA = {
    "type": "object",
    "required": ["model", "estimators", "n_grid"],
    "properties": {
        "model": MODEL_SCHEMA,
        "sim": SIM_SCHEMA,
        "estimators": {"type": "array", "items": ESTIMATOR_SCHEMA, "minItems": 1},
        "n_grid": {"type": "array", "items": _int, "minItems": 1},
        "replications": _int,
        "master_seed": _int,
        "force": {"type": "boolean"},
    },
    "additionalProperties": False,
}

SCHEMAS = {
    "simulate": {
        "type": "object",
        "required": ["model", "n"],
        "properties": {"model": MODEL_SCHEMA, "sim": SIM_SCHEMA, "n": _int, "seed": _int,
                       "log_jumps": {"type": "boolean"}},
        "additionalProperties": False,
    },
    "estimate": {
        "type": "object",
        "required": ["estimator"],
        "properties": {"estimator": {"enum": ["spectral", "trc", "rc"]},
                       "increments": {"type": "string"}, "M": _num, "r": _num,
                       "u_override": _opt_num, "u_exp": _num},
        "additionalProperties": False,
    },
    "benchmark": PLAN_SCHEMA,
    "rates": {
        "type": "object",
        "required": ["r"],
        "properties": {"r": _num, "estimator": {"type": "string"},
                       "slope_tolerance": _num, "report": {"type": "string"},
                       "plan": PLAN_SCHEMA},
        "oneOf": [{"required": ["report"]}, {"required": ["plan"]}],
        "additionalProperties": False,
    },
    "check-class": {
        "type": "object",
        "required": ["model", "M", "r"],
        "properties": {"model": MODEL_SCHEMA, "M": _num, "r": _num},
        "additionalProperties": False,
    },
}


class ConfigError(ValueError):
    pass


def load_config(path, subcommand: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    validate(cfg, subcommand, source=str(path))
    return cfg


def validate(cfg: dict, subcommand: str, source: str = "<config>"):
    try:
        jsonschema.validate(cfg, SCHEMAS[subcommand])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{source}: field '{where}': {exc.message}") from exc


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n")


def _resolve_seed(args, cfg_seed):
    if args.seed is not None:
        return args.seed, True
    return (cfg_seed if cfg_seed is not None else 0), False


def cmd_simulate(args, cfg, out: Path) -> int:
    model = LevyModelSpec.from_dict(cfg["model"])
    sim = SimulationConfig.from_dict(cfg.get("sim"))
    seed, overridden = _resolve_seed(args, cfg.get("seed"))
    sample = simulate_path(model, sim, int(cfg["n"]), seed, log=True)
    sample.write_csv(out / "increments.csv")
    if cfg.get("log_jumps", True):
        sample.jump_log.write_csv(out / "jumps.csv")
    echo = dict(cfg, seed=seed)
    _write_json(out / "simulate.json",
                {"config": echo, "seed_override": overridden, "n_jumps": len(sample.jump_log),
                 "co_volatility": model.co_volatility})
    return EXIT_OK


def estimate_from_config(sample, cfg: dict) -> dict:
    kind = cfg["estimator"]
    n = sample.n
    if kind == "spectral":
        sc = est.SpectralConfig(ClassParams(cfg.get("M", 4.229), cfg.get("r", 1.0)),
                                cfg.get("u_override"))
        res = est.spectral_estimate(sample, sc)
        value = res.value if res.valid else None
        return {"value": value, "valid": res.valid, "u_used": res.u_used, "n": n,
                "ecf_plus_modulus": res.ecf_plus.modulus,
                "ecf_minus_modulus": res.ecf_minus.modulus}
    if kind == "trc":
        tc = est.TrcConfig(1.0 / n, cfg.get("u_exp", 0.387))
        return {"value": est.trc_estimate(sample, tc), "valid": True, "u_used": None, "n": n,
                "threshold": tc.threshold}
    return {"value": est.realized_covariance(sample), "valid": True, "u_used": None, "n": n}


def cmd_estimate(args, cfg, out: Path) -> int:
    src = args.input or cfg.get("increments")
    if src is None:
        raise ConfigError("no increments file: pass --input or set 'increments'")
    src = Path(src)
    if not src.is_absolute() and args.input is None:
        src = Path(args.config).parent / src
    if not src.exists():
        raise ConfigError(f"increments file not found: {src}")
    try:
        sample = PathSample.read_csv(src)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_json(out / "estimate.json", estimate_from_config(sample, cfg))
    return EXIT_OK


def _run_plan(args, plan_cfg: dict, out: Path):
    plan_cfg = dict(plan_cfg)
    seed, overridden = _resolve_seed(args, plan_cfg.get("master_seed"))
    plan_cfg["master_seed"] = seed
    if args.force:
        plan_cfg["force"] = True
    plan = ExperimentPlan.from_dict(plan_cfg)
    report = run_experiment(plan, threads=args.threads, keep_raw=args.emit_raw)
    report.write_csv(out / "report.csv")
    if args.emit_raw:
        report.write_raw_csv(out / "raw_estimates.csv")
    return plan, report, overridden


def cmd_benchmark(args, cfg, out: Path) -> int:
    plan, report, overridden = _run_plan(args, cfg, out)
    for label in report.estimators():
        spec = next(e for e in plan.estimators if e.label == label)
        if spec.kind == "spectral" and len(plan.n_grid) >= 3:
            fit_rate(report, RateTarget(spec.r), estimator=label)
    side = report.sidecar()
    side["seed_override"] = overridden
    _write_json(out / "report.json", side)
    return EXIT_OK


def cmd_rates(args, cfg, out: Path) -> int:
    if "report" in cfg:
        path = Path(cfg["report"])
        if not path.is_absolute():
            path = Path(args.config).parent / path
        if not path.exists():
            raise ConfigError(f"report file not found: {path}")
        try:
            report = BenchmarkReport.read_csv(path)
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        overridden = False
    else:
        _, report, overridden = _run_plan(args, cfg["plan"], out)
    fit = fit_rate(report, RateTarget(cfg["r"]), estimator=cfg.get("estimator", "spectral"),
                   slope_tolerance=cfg.get("slope_tolerance", 0.15))
    result = {"rate_fit": vars(fit), "seed_override": overridden}
    _write_json(out / "rates.json", result)
    print(f"{fit.estimator}: slope {fit.slope:.4f} vs {fit.predicted:.4f} on {fit.predictor} "
          f"-> {'PASS' if fit.passed else 'FAIL'}")
    return EXIT_OK


def cmd_check_class(args, cfg, out: Path) -> int:
    model = LevyModelSpec.from_dict(cfg["model"])
    rep = check_class_membership(model, ClassParams(cfg["M"], cfg["r"]))
    d = rep.to_dict()
    d = {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}
    _write_json(out / "check_class.json", d)
    verdict = "PASS" if rep.passed else f"FAIL ({rep.reason})"
    print(f"class L^{rep.r}_{rep.M}: total {rep.total:.6g} -> {verdict}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "benchmark": cmd_benchmark,
    "rates": cmd_rates,
    "check-class": cmd_check_class,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levycov", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=None, help="overrides the seed in the config")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes for replications (env LEVYCOV_THREADS)")
    p.add_argument("--emit-raw", action="store_true", help="write raw estimate vectors")
    p.add_argument("--force", action="store_true", help="run even outside the class")
    p.add_argument("--input", default=None, help="increments CSV for 'estimate'")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is None and os.environ.get("LEVYCOV_THREADS"):
        args.threads = int(os.environ["LEVYCOV_THREADS"])
    try:
        cfg = load_config(args.config, args.subcommand)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.subcommand](args, cfg, out)
    except (ConfigError, ModelError, ClassMembershipError) as exc:
        print(f"levycov: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        # raised by dataclass validation of plan fields
        print(f"levycov: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # numerical failure
        origin = type(exc).__module__
        print(f"levycov: runtime error [{origin}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
