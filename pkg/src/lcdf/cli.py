"""Command-line experiment runner.

    lcdf <command> [config.json] [--seed S] [--threads T] [--out DIR]
    lcdf run config.json          (command taken from the file)

Writes DIR/result.json for every command and DIR/scan.csv for spectral
runs. Exit status: 0 success, 2 invalid input, 3 numerical failure.
Floats are written with repr(), the shortest string that round-trips.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import advantage, efron_stein, priors, spectral
from . import channels as ch
from .errors import NumericalError, ValidationError

log = logging.getLogger("lcdf")

COMMANDS = ("fisher", "overlap", "advantage", "exact", "universality", "spectral", "phase-diagram", "selftest")
STOCHASTIC = {"advantage", "universality", "spectral", "phase-diagram"}
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

# formula behind each reported quantity, logged as it is computed
PROVENANCE = {
    "F": "F = E_0[(d/dx L_x(y))^2] at x = 0 by adaptive quadrature",
    "F_fd": "F = d^2 R / dx1 dx2 at 0 by Richardson-extrapolated central differences",
    "overlap": "R(x1, x2) = E_0[(L_x1 - 1)(L_x2 - 1)]",
    "subset_formula": "CAdv^2 = E sum_{|S|<=D} prod_{i in S} R(x1_i, x2_i)",
    "exp_bound": "E trunc_exp(sum_i R(x1_i, x2_i), D), upper bound on the subset formula",
    "univ": "Univ_D = E trunc_exp(<x1, x2> / sigma^2, D)",
    "cadv_exact": "|| P_{<=D} L ||_Q by exact Efron-Stein projection",
    "cadv_formula_exact": "sqrt of signal-pair sum of e_{<=D} over exact overlaps",
    "lambda_max": "n^{-1/2} lambda_max of the entrywise-transformed matrix",
}


def _threads(args, cfg) -> int:
    for value in (args.threads, cfg.get("threads"), os.environ.get("LCDF_THREADS")):
        if value is not None:
            try:
                t = int(value)
            except ValueError:
                raise ValidationError(f"thread count {value!r} is not an integer") from None
            if t < 1:
                raise ValidationError("thread count must be at least 1")
            return t
    return 1


def _seed(args, cfg, command):
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None and command in STOCHASTIC:
        raise ValidationError(f"'{command}' needs a seed (--seed or \"seed\" in the config)")
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        raise ValidationError("seed must be a non-negative integer")
    return seed


def _require(cfg, key):
    if key not in cfg:
        raise ValidationError(f"config is missing '{key}'")
    return cfg[key]


def _tag(name):
    log.info("%s: %s", name, PROVENANCE[name])
    return name


def cmd_fisher(cfg, seed, threads):
    channel = ch.from_config(_require(cfg, "channel"))
    F = channel.fisher_information()
    out = {"F": F, "estimator": _tag("F"), "channel": channel.describe()}
    if cfg.get("cross_check", True) and not channel.degenerate:
        out["F_fd"] = ch.fisher_information_extrapolated(channel)
        out["F_fd_estimator"] = _tag("F_fd")
    return out, None


def cmd_overlap(cfg, seed, threads):
    channel = ch.from_config(_require(cfg, "channel"))
    x1 = np.asarray(_require(cfg, "x1"), dtype=float)
    x2 = np.asarray(_require(cfg, "x2"), dtype=float)
    R = np.asarray(channel.overlap(x1, x2), dtype=float)
    return {"overlap": R.tolist(), "estimator": _tag("overlap"), "channel": channel.describe()}, None


def _trials_and_D(cfg):
    D = int(_require(cfg, "D"))
    trials = int(_require(cfg, "trials"))
    return D, trials


def cmd_advantage(cfg, seed, threads):
    prior = priors.from_config(_require(cfg, "prior"))
    channel = ch.from_config(_require(cfg, "channel"))
    D, trials = _trials_and_D(cfg)
    estimates = {"subset_formula": advantage.cadv_mc(prior, channel, D, trials, seed, threads)}
    _tag("subset_formula")
    if D % 2 == 0:
        estimates["exp_bound"] = advantage.cadv_exp_bound_mc(prior, channel, D, trials, seed, threads)
        estimates["univ"] = advantage.univ_mc(prior, 1.0 / channel.fisher_information(), D, trials, seed, threads)
        _tag("exp_bound")
        _tag("univ")
    return {k: v.to_dict() for k, v in estimates.items()}, None


def cmd_universality(cfg, seed, threads):
    prior = priors.from_config(_require(cfg, "prior"))
    channel = ch.from_config(_require(cfg, "channel"))
    D, trials = _trials_and_D(cfg)
    _tag("subset_formula")
    _tag("univ")
    return advantage.universality_report(prior, channel, D, trials, seed, threads).to_dict(), None


def cmd_exact(cfg, seed, threads):
    source = cfg.get("model")
    if source is None:
        model = efron_stein.load_bundled_model()
    elif isinstance(source, str):
        try:
            model = efron_stein.DiscreteLVM.from_json(Path(source))
        except OSError as exc:
            raise ValidationError(f"cannot read model file: {exc}") from None
    else:
        model = efron_stein.DiscreteLVM.from_json(source)
    degrees = cfg.get("D", list(range(model.N + 1)))
    degrees = [degrees] if isinstance(degrees, int) else list(degrees)
    rows, worst = [], 0.0
    _tag("cadv_exact")
    _tag("cadv_formula_exact")
    for D in degrees:
        a = efron_stein.cadv_exact(model, int(D))
        b = efron_stein.cadv_formula_exact(model, int(D))
        rel = abs(a - b) / abs(b)
        worst = max(worst, rel)
        rows.append({"D": int(D), "cadv_exact": a, "cadv_formula_exact": b, "relative_difference": rel})
    if worst > 1e-10:
        raise NumericalError("exact and formula routes disagree", worst)
    return {"N": model.N, "shape": list(model.shape), "degrees": rows, "max_relative_difference": worst}, None


def _spectral_rows(cfg, seed, threads, single):
    block = _require(cfg, "spectral") if "spectral" in cfg else cfg
    base, grid, etas = spectral.config_from_block(block)
    trials = int(block.get("trials", cfg.get("trials", 1)))
    if single and len(grid) != 1:
        raise ValidationError("'spectral' runs one lambda; use 'phase-diagram' for a grid")
    _tag("lambda_max")
    scan = spectral.phase_scan(base, grid, trials, seed, etas, threads)
    return {"rows": scan.rows, **scan.metadata}, scan


def cmd_spectral(cfg, seed, threads):
    return _spectral_rows(cfg, seed, threads, single=True)


def cmd_phase_diagram(cfg, seed, threads):
    return _spectral_rows(cfg, seed, threads, single=False)


def cmd_selftest(cfg, seed, threads):
    from .selftest import run_selftest

    checks = run_selftest()
    for c in checks:
        log.info("%s %s", "PASS" if c["passed"] else "FAIL", c["name"])
    timing = {c["name"]: c.pop("seconds") for c in checks}
    failed = [c["name"] for c in checks if not c["passed"]]
    result = {"checks": checks, "all_passed": not failed, "timing": timing}
    if failed:
        result["failed"] = failed
    return result, None


HANDLERS = {
    "fisher": cmd_fisher,
    "overlap": cmd_overlap,
    "advantage": cmd_advantage,
    "exact": cmd_exact,
    "universality": cmd_universality,
    "spectral": cmd_spectral,
    "phase-diagram": cmd_phase_diagram,
    "selftest": cmd_selftest,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    return cfg


def run(command: str, cfg: dict, seed=None, threads=None, out=None) -> tuple:
    """Run one command; returns (payload, scan-or-None). Raises package errors."""
    if command not in HANDLERS:
        raise ValidationError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    ns = argparse.Namespace(seed=seed, threads=threads)
    seed = _seed(ns, cfg, command)
    threads = _threads(ns, cfg)
    t0 = time.perf_counter()
    result, scan = HANDLERS[command](cfg, seed, threads)
    payload = {
        "command": command,
        "seed": seed,
        "config": cfg,
        "result": result,
        "meta": {"seconds": time.perf_counter() - t0, "threads": threads},
    }
    if isinstance(result, dict) and "timing" in result:
        payload["meta"]["timing"] = result.pop("timing")
    if out is not None:
        write_outputs(out, payload, scan)
    return payload, scan


def write_outputs(out, payload, scan=None) -> None:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        if scan is not None:
            scan.to_csv(out / "scan.csv")
    except OSError as exc:
        raise ValidationError(f"cannot write output to {out}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lcdf", description="Channel overlaps, coordinate advantages and spiked-matrix experiments.")
    p.add_argument("command", choices=(*COMMANDS, "run"))
    p.add_argument("config", nargs="?", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", default=None, help="output directory (default: config 'output' or ./lcdf-out)")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        command = args.command
        if command == "run":
            command = cfg.get("command")
            if command is None:
                raise ValidationError("'run' needs a \"command\" field in the config")
        out = args.out or cfg.get("output") or "lcdf-out"
        payload, _ = run(command, cfg, args.seed, args.threads, out)
    except ValidationError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except NumericalError as exc:
        log.error("numerical failure: %s (achieved %s)", exc, exc.achieved)
        return EXIT_NUMERICAL
    log.info("wrote %s", Path(out) / "result.json")
    if command == "selftest" and not payload["result"]["all_passed"]:
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
