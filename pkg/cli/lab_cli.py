#!/usr/bin/env python3
import argparse
import configparser
import sys
import time
from dataclasses import asdict, fields, replace
from pathlib import Path
from typing import Any, Callable

from loguru import logger

import lab.core.config as cfg
from lab.core.analytic import write_grid_csv
from lab.core.errors import EXIT_INTERNAL, ConfigError, LabError
from lab.core.handlers.analytic_handler import analytic_closed_form, analytic_iterate, analytic_ode, analytic_residual
from lab.core.handlers.ising_handler import ising_coupled, ising_infection, ising_rate_sum
from lab.core.handlers.simulate_handler import simulate_coalescing, simulate_lattice, simulate_voter
from lab.core.handlers.verify_handler import verify_suite
from lab.core.protocol import (
    ANALYTIC,
    COMMANDS,
    ISING,
    SIMULATE,
    STOCHASTIC,
    VERIFY,
    ExperimentConfig,
    GuardSettings,
    config_to_dict,
    table_to_dict,
)
from lab.util.report import render_csv, write_csv, write_json
from lab.util.validator import require_seed
from shared.logger import ensure_global_logger

ensure_global_logger()

HANDLERS: dict[tuple[str, str], Callable[[ExperimentConfig], dict]] = {
    (SIMULATE, "coalescing"): simulate_coalescing,
    (SIMULATE, "voter"): simulate_voter,
    (SIMULATE, "lattice-demo"): simulate_lattice,
    (ISING, "coupled"): ising_coupled,
    (ISING, "infection"): ising_infection,
    (ISING, "rate-sum"): ising_rate_sum,
    (ANALYTIC, "iterate"): analytic_iterate,
    (ANALYTIC, "ode"): analytic_ode,
    (ANALYTIC, "closed-form"): analytic_closed_form,
    (ANALYTIC, "residual"): analytic_residual,
    (VERIFY, "fast"): verify_suite,
    (VERIFY, "full"): verify_suite,
}

# Values used when neither the config file nor a flag sets a parameter.
ACTION_DEFAULTS: dict[tuple[str, str], dict[str, Any]] = {
    (SIMULATE, "coalescing"): {"n": 1, "samples": 10_000},
    (SIMULATE, "voter"): {"n": 0, "samples": 10_000},
    (SIMULATE, "lattice-demo"): {"horizon": 50.0},
    (ISING, "coupled"): {"depth": 8, "horizon": 50.0},
    (ISING, "infection"): {"depth": 12, "horizon": 200.0},
    (ANALYTIC, "iterate"): {"iterations": 20},
    (VERIFY, "fast"): {"seed": 0},
    (VERIFY, "full"): {"seed": 0},
}

INT_KEYS = {"n", "d", "depth", "side", "dim", "iterations", "samples", "seed", "workers"}
FLOAT_KEYS = {"beta", "horizon", "tol", "h", "t_max"}
GUARD_KEYS = {f.name for f in fields(GuardSettings)}


def _parse_value(key: str, raw: str) -> Any:
    try:
        if key == "T":
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if key in INT_KEYS:
            return int(raw)
        if key in FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None
    return raw.strip()


def read_config_file(path: Path) -> tuple[dict[str, Any], dict[str, Any]]:
    """
    Read an INI experiment file. Returns (parameters, guard overrides); sections other than
    [guards] are flattened.
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, Any] = {}
    guards: dict[str, Any] = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if section == "guards":
                if key not in GUARD_KEYS:
                    raise ConfigError(f"unknown guard '{key}'")
                guards[key] = float(raw) if key == "max_horizon" else int(raw)
            else:
                values[key] = _parse_value(key, raw)
    logger.info(f"loaded experiment config {path}")
    return values, guards


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=cfg.TOOL_NAME, description="Stationary particle systems on directed trees: simulations and numerics."
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="command family")
    parser.add_argument("action", help="sub-command, or the suite name for verify")
    parser.add_argument("--config", type=Path, help="INI experiment file; flags override its values")
    parser.add_argument("--n", type=int, help="layer depth of the estimated vertex")
    parser.add_argument("--d", type=int, help="branching number")
    parser.add_argument("--T", type=float, nargs="+", help="durations")
    parser.add_argument("--beta", type=float, help="inverse temperature")
    parser.add_argument("--schedule", help="coupling schedule id (ksq, kcube, triangular)")
    parser.add_argument("--depth", type=int, help="window depth K")
    parser.add_argument("--horizon", type=float, help="simulated time horizon")
    parser.add_argument("--tol", type=float, help="rate-sum tolerance")
    parser.add_argument("--side", type=int, help="torus side length")
    parser.add_argument("--dim", type=int, help="torus dimension")
    parser.add_argument("--model", help="analytic model (coalescing, voter, general)")
    parser.add_argument("--iterations", type=int, help="chi iterations")
    parser.add_argument("--samples", type=int, help="Monte Carlo samples")
    parser.add_argument("--seed", type=int, help="master seed (mandatory for stochastic commands)")
    parser.add_argument("--workers", type=int, help="worker processes")
    parser.add_argument("--h", type=float, help="grid step")
    parser.add_argument("--t-max", dest="t_max", type=float, help="grid horizon")
    parser.add_argument("--out", help="report directory")
    parser.add_argument("--format", dest="fmt", choices=("csv", "json"), help="report format")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    command, action = args.command, args.action
    if action not in COMMANDS[command]:
        raise ConfigError(f"unknown {command} action '{action}' (known: {', '.join(COMMANDS[command])})")
    values: dict[str, Any] = dict(ACTION_DEFAULTS.get((command, action), {}))
    guard_overrides: dict[str, Any] = {}
    if args.config is not None:
        file_values, guard_overrides = read_config_file(args.config)
        file_values.pop("command", None)
        file_values.pop("action", None)
        values.update(file_values)
    known = {f.name for f in fields(ExperimentConfig)}
    for key, value in vars(args).items():
        if key in known and key not in ("command", "action") and value is not None:
            values[key] = tuple(value) if key == "T" else value
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    config = ExperimentConfig(command=command, action=action, **values)
    config = replace(config, guards=replace(config.guards, **guard_overrides))
    if (command, action) in STOCHASTIC:
        require_seed(config.seed)
    if command == ISING and config.beta is None:
        raise ConfigError("--beta is required for ising commands")
    if config.fmt not in ("csv", "json"):
        raise ConfigError(f"unknown report format '{config.fmt}'")
    return config


def write_reports(config: ExperimentConfig, envelope: dict, elapsed: float) -> list[Path]:
    out = Path(config.out)
    stem = f"{config.command}-{config.action}"
    payload = envelope.get("payload", {})
    tables = payload.get("tables", [])
    # report bytes depend only on the config and seed; execution details go to the timing sidecar
    resolved = config_to_dict(config)
    execution = {"workers": resolved.pop("workers"), "out": resolved.pop("out")}
    meta = {
        "tool": cfg.TOOL_NAME,
        "version": cfg.TOOL_VERSION,
        "config": resolved,
        "seed": config.seed,
        "guards": asdict(config.guards),
        "status": envelope["status"],
        "code": envelope["code"],
        "message": envelope.get("message", ""),
        "summary": payload.get("summary", {}),
    }
    written = []
    if config.fmt == "json":
        meta["tables"] = {t.name: table_to_dict(t) for t in tables}
    else:
        meta["tables"] = [f"{stem}.{t.name}.csv" for t in tables]
        for t in tables:
            written.append(write_csv(out / f"{stem}.{t.name}.csv", t.columns, t.rows))
    for name, model, grid in payload.get("grids", []):
        written.append(write_grid_csv(out / f"{stem}.{name}.grid.csv", model, grid))
    written.append(write_json(out / f"{stem}.json", meta))
    write_json(out / f"{stem}.timing.json", {"wall_clock_seconds": elapsed, **execution})
    return written


def run(config: ExperimentConfig) -> int:
    """Dispatch one resolved config, write its reports and return the exit status."""
    handler = HANDLERS[(config.command, config.action)]
    started = time.perf_counter()
    envelope = handler(config)
    elapsed = time.perf_counter() - started
    logger.info(f"{config.command} {config.action} finished in {elapsed:.3f}s with status {envelope['status']}")
    write_reports(config, envelope, elapsed)
    tables = envelope.get("payload", {}).get("tables", [])
    if tables:
        sys.stdout.write(render_csv(tables[0].columns, tables[0].rows))
    if envelope["status"] != "ok":
        print(f"Error [{envelope['code']}]: {envelope.get('message', '')}", file=sys.stderr)
    return envelope["code"]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(resolve_config(args))
    except LabError as e:
        logger.error(f"{args.command} {args.action} failed: {e}")
        print(f"Error [{e.code}]: {e}", file=sys.stderr)
        return e.code
    except Exception as e:
        logger.exception(f"unexpected failure in {args.command} {args.action}")
        print(f"Error [{EXIT_INTERNAL}]: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
