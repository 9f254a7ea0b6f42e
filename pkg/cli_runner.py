# -*- coding: utf-8 -*-
r"""Command line entry point: simulate, bounds, tower and gof.

    Settings are resolved as built-in defaults < simulate.cfg < command line flags
    and frozen into a RunConfig before anything runs.

    Exit codes:
        0   completed (and, for bounds / tower / gof, every verdict passed)
        1   some verdict failed
        2   refused: the run needs more draws than budget_draws
        3   bad configuration, or a construction that can't be built

    Files written to output_dir:
        report.json, samples_<n>.csv                        simulate
        bounds.json                                         bounds
        tower.json, orbits.csv                              tower
        gof.json, qq_<n>.csv, ecf_<n>.csv                   gof

    Reports embed the resolved config (without workers or output_dir) and the calibrated
    constants with their grids, and contain no timestamps, so a rerun with the same
    config writes identical bytes whatever the number of workers.

    Typical usage:

    python cli_runner.py simulate --alpha 1.0 --n 4096 --replicas 10000 --variant Z --seed 42
    python cli_runner.py gof --n 4096
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import datetime
import json
import logging
import os
import pathlib
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

import array_builder as ab
import bound_checks
import clt_simulator as sim
import gof_stats
import stable_core
import timing
import tower_embedding as te

log = logging.getLogger(__name__)

CONFIG_FILE = "simulate.cfg"  # read from the same folder as cli_runner.py unless --config is given

EXIT_PASS = 0
EXIT_VERDICT_FAILED = 1
EXIT_BUDGET = 2
EXIT_CONSTRUCTION = 3

TOWER_KS_LIMIT = 0.10

ECF_THETAS = (0.25, 0.5, 1.0, 2.0)

DEFAULTS: Dict[str, Dict[str, str]] = {
    "options": {
        "alpha": "1.0",
        "n_grid": "256, 4096",
        "replicas": "1000",
        "variant": "Z",
        "mode": "coupled",
        "master_seed": "0",
        "epsilon_tail": str(sim.DEFAULT_EPSILON_TAIL),
        "budget_draws": str(sim.DEFAULT_BUDGET_DRAWS),
        "output_dir": "./output",
        "workers": "1",
        "target_sigma": "",
        "logging_level": "INFO",
        "ks_multiple": "1.5",
    },
    "tower": {
        "stages": str(te.DEFAULT_STAGES),
        "k_max": "3",
        "alphabet_cap": "9",
        "prob_denominator": str(2**16),
        "tower_n": "256",
        "orbits": "1000",
        "oracle_samples": "10000",
        "validation_samples": "100000",
    },
    "bounds": {
        "n_grid": "256, 1024, 4096",
        "replicas": "1000",
        "inject_fault": "false",
    },
}


class ConfigError(ValueError):
    """Raised for an unreadable config file or a setting outside its allowed range"""

    pass


@dataclasses.dataclass(frozen=True)
class TowerConfig:
    stages: int = te.DEFAULT_STAGES
    k_max: int = 3
    alphabet_cap: int = 9
    prob_denominator: int = 2**16
    tower_n: int = 256
    orbits: int = 1000
    oracle_samples: int = 10000
    validation_samples: int = 100000


@dataclasses.dataclass(frozen=True)
class BoundsConfig:
    n_grid: Tuple[int, ...] = (256, 1024, 4096)
    replicas: int = 1000
    inject_fault: bool = False


@dataclasses.dataclass(frozen=True)
class RunConfig:
    alpha: float = 1.0
    n_grid: Tuple[int, ...] = (256, 4096)
    replicas: int = 1000
    variant: ab.Variant = ab.Variant.Z
    mode: sim.Mode = sim.Mode.COUPLED
    master_seed: int = 0
    epsilon_tail: float = sim.DEFAULT_EPSILON_TAIL
    budget_draws: int = sim.DEFAULT_BUDGET_DRAWS
    output_dir: pathlib.Path = pathlib.Path("./output")
    workers: int = 1
    target_sigma: Optional[float] = None
    logging_level: str = "INFO"
    ks_multiple: float = 1.5
    tower: TowerConfig = TowerConfig()
    bounds: BoundsConfig = BoundsConfig()

    def __post_init__(self):
        problems = []
        if not 0 < self.alpha < 2:
            problems.append(f"alpha must be inside (0, 2): {self.alpha}")
        if not self.n_grid or any(n < 2 for n in self.n_grid) or list(self.n_grid) != sorted(self.n_grid):
            problems.append(f"n_grid must be a nonempty sorted list of integers >= 2: {self.n_grid}")
        if self.replicas < 1:
            problems.append(f"replicas must be >= 1: {self.replicas}")
        if not 0 <= self.master_seed <= ab.MAX_SEED:
            problems.append(f"master_seed must be a 64-bit unsigned integer: {self.master_seed}")
        if not 0 < self.epsilon_tail < 1:
            problems.append(f"epsilon_tail must be inside (0, 1): {self.epsilon_tail}")
        if self.budget_draws < 1:
            problems.append(f"budget_draws must be >= 1: {self.budget_draws}")
        if self.workers < 1:
            problems.append(f"workers must be >= 1: {self.workers}")
        if self.target_sigma is not None and not self.target_sigma > 0:
            problems.append(f"target_sigma must be positive: {self.target_sigma}")
        if self.bounds.replicas < 2 or len(self.bounds.n_grid) < 3:
            problems.append(f"bounds need replicas >= 2 and at least 3 n values: {self.bounds}")
        if self.tower.k_max < 1 or self.tower.orbits < 1 or self.tower.validation_samples < 1:
            problems.append(f"tower needs k_max, orbits and validation_samples >= 1: {self.tower}")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict:
        """Resolved settings for reports, without workers or output_dir since neither changes results"""
        data = dataclasses.asdict(self)
        data.pop("workers")
        data.pop("output_dir")
        data["variant"] = self.variant.value
        data["mode"] = self.mode.value
        data["n_grid"] = list(self.n_grid)
        data["bounds"]["n_grid"] = list(self.bounds.n_grid)
        return data


# config -------------------------------------------------------------------------------- #


def _log_level(value: str) -> str:
    if value.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise ValueError("not a logging level")
    return value.upper()


def _int_list(value: str) -> Tuple[int, ...]:
    return tuple(sorted(int(v.strip()) for v in value.split(",") if v.strip()))


def load_config(path: Optional[os.PathLike] = None, overrides: Optional[Dict[str, Dict[str, str]]] = None) -> RunConfig:
    """defaults < config file < overrides (section -> key -> string value)"""
    config = configparser.ConfigParser(inline_comment_prefixes=("#",))
    config.read_dict(DEFAULTS)
    if path is not None:
        path = pathlib.Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            config.read(path)
        except configparser.ParsingError as exc:
            lines = "; ".join(f"line {lineno}: {line!r}" for lineno, line in getattr(exc, "errors", []))
            raise ConfigError(f"{path}: malformed config: {lines or exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if overrides:
        config.read_dict({section: {k: str(v) for k, v in values.items() if v is not None} for section, values in overrides.items()})

    def get(section: str, key: str, parse):
        value = config[section].get(key, fallback="").strip()
        try:
            return parse(value)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"[{section}] {key} = {value!r}: {exc}") from exc

    options = "options"
    try:
        return RunConfig(
            alpha=get(options, "alpha", float),
            n_grid=get(options, "n_grid", _int_list),
            replicas=get(options, "replicas", int),
            variant=get(options, "variant", lambda v: ab.Variant(v.upper())),
            mode=get(options, "mode", lambda v: sim.Mode(v.lower())),
            master_seed=get(options, "master_seed", int),
            epsilon_tail=get(options, "epsilon_tail", float),
            budget_draws=get(options, "budget_draws", lambda v: int(float(v))),
            output_dir=get(options, "output_dir", pathlib.Path),
            workers=get(options, "workers", int),
            target_sigma=get(options, "target_sigma", lambda v: float(v) if v else None),
            logging_level=get(options, "logging_level", _log_level),
            ks_multiple=get(options, "ks_multiple", float),
            tower=TowerConfig(
                stages=get("tower", "stages", int),
                k_max=get("tower", "k_max", int),
                alphabet_cap=get("tower", "alphabet_cap", int),
                prob_denominator=get("tower", "prob_denominator", int),
                tower_n=get("tower", "tower_n", int),
                orbits=get("tower", "orbits", int),
                oracle_samples=get("tower", "oracle_samples", int),
                validation_samples=get("tower", "validation_samples", int),
            ),
            bounds=BoundsConfig(
                n_grid=get("bounds", "n_grid", _int_list),
                replicas=get("bounds", "replicas", int),
                inject_fault=get("bounds", "inject_fault", lambda v: config.BOOLEAN_STATES[v.lower()]),
            ),
        )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# logging / console --------------------------------------------------------------------- #


def setup_logging(level: str = "INFO", log_dir: os.PathLike = "./logs", filename: str = "simulate.log") -> pathlib.Path:
    log_folder = pathlib.Path(log_dir).resolve()
    log_folder.mkdir(parents=True, exist_ok=True)
    log_path = log_folder / filename
    if log_path.exists() and log_path.stat().st_size > 1 * 1024**2:
        log_path.rename(log_path.with_stem(f"{log_path.stem}_{datetime.datetime.now().strftime('%Y-%m-%d')}"))
    logging.basicConfig(
        filename=str(log_path),
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(threadName)s %(message)s",
        datefmt="%Y-%m-%d %H:%M",
    )
    return log_path


def progressbar(it: Sequence, prefix: str = "", size: int = 20, file=None, display: bool = True):
    file = file or sys.stdout
    count = len(it)
    digits = len(str(count))

    def show(j):
        if display:
            x = int(size * j / (count if count != 0 else 1))
            file.write(f'{prefix}[{x * "#"}{"." * (size - x)}] {str(j).zfill(digits)}/{count}\r')
            file.flush()

    show(0)
    for i, item in enumerate(it):
        yield item
        show(i + 1)
    if display:
        file.write("\n")
        file.flush()


DIVIDER = "\n" + "=" * 40 + "\n\n"


def _write_json(path: pathlib.Path, data: dict) -> pathlib.Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True))
    return path


def _reference_sigma(config: RunConfig) -> float:
    if config.target_sigma is not None:
        return config.target_sigma
    return sim.limit_sigma_alpha(config.alpha) ** (1 / config.alpha)


# commands ------------------------------------------------------------------------------ #


def cmd_simulate(config: RunConfig) -> int:
    spec = ab.ArraySpec(config.alpha, config.master_seed)
    ranges = {n: sim.scale_ranges(config.alpha, n, config.epsilon_tail) for n in config.n_grid}
    estimates = {n: sim.estimate_draws(spec, ranges[n], config.replicas, config.mode) for n in config.n_grid}
    if sum(estimates.values()) > config.budget_draws:
        raise sim.BudgetError(sum(estimates.values()), config.budget_draws)

    cert = stable_core.calibrate_tail_constant(config.alpha)
    limit = sim.limit_sigma_alpha(config.alpha)
    reference = stable_core.make_params(config.alpha, _reference_sigma(config))
    scale = sim.target_scale(config.alpha, config.target_sigma)
    runs, summary = [], []
    for n in progressbar(config.n_grid, prefix="n grid "):
        run = sim.simulate(
            spec,
            n,
            config.replicas,
            config.variant,
            config.mode,
            epsilon_tail=config.epsilon_tail,
            budget_draws=config.budget_draws,
            workers=config.workers,
            target_sigma=config.target_sigma,
        )
        gof_stats.write_samples_csv(config.output_dir / f"samples_{n}.csv", run.to_frame())
        sigma_n_alpha = sim.theoretical_sigma_n(config.alpha, n)
        medium_reference = stable_core.make_params(config.alpha, sigma_n_alpha ** (1 / config.alpha) * scale)
        total_report = gof_stats.gof_report(run.sample(), reference, config.ks_multiple)
        medium_report = gof_stats.gof_report(run.sample(sim.Part.MEDIUM), medium_reference, config.ks_multiple, with_qq=False)
        runs.append(
            {
                "n": n,
                "ranges": run.ranges.to_dict(),
                "estimated_draws": estimates[n],
                "sigma_n_alpha": sigma_n_alpha,
                "limit_sigma_alpha": limit,
                "sigma_small_alpha": sim.theoretical_sigma_small(config.alpha, n),
                "total": total_report.to_json(),
                "medium": medium_report.to_json(),
                "invariant_violations": run.invariant_violations(),
                "large_nonzero_fraction": run.large_nonzero_fraction(),
            }
        )
        summary.append(
            {
                "n": n,
                "sigma_n_alpha": sigma_n_alpha,
                "ks_total": total_report.ks,
                "ks_medium": medium_report.ks,
                "threshold": total_report.threshold,
            }
        )
    _write_json(
        config.output_dir / "report.json",
        {
            "command": "simulate",
            "config": config.to_dict(),
            "tail_certificate": cert.to_dict(),
            "variance_certificate": stable_core.calibrate_variance_constant(config.alpha).to_dict(),
            "limit_sigma_alpha": limit,
            "runs": runs,
        },
    )
    print(f"{DIVIDER}{pd.DataFrame(summary).to_string(index=False)}")
    return EXIT_PASS


def cmd_bounds(config: RunConfig) -> int:
    verdicts = bound_checks.run_bound_suite(
        config.alpha,
        config.bounds.n_grid,
        config.bounds.replicas,
        config.master_seed,
        config.epsilon_tail,
        config.budget_draws,
        config.workers,
        config.bounds.inject_fault,
    )
    passed = all(v.passed for v in verdicts)
    _write_json(
        config.output_dir / "bounds.json",
        {
            "command": "bounds",
            "config": config.to_dict(),
            "tail_certificate": stable_core.calibrate_tail_constant(config.alpha).to_dict(),
            "variance_certificate": stable_core.calibrate_variance_constant(config.alpha).to_dict(),
            "verdicts": [v.to_json() for v in verdicts],
            "pass": passed,
        },
    )
    table = pd.DataFrame([{"check": v.name, "pass": v.passed} for v in verdicts])
    print(f"{DIVIDER}{table.to_string(index=False)}")
    return EXIT_PASS if passed else EXIT_VERDICT_FAILED


def cmd_tower(config: RunConfig) -> int:
    tc = config.tower
    system = te.build_system(stages=tc.stages)
    laws = [
        te.coarsened_z_law(config.alpha, k, tc.alphabet_cap, tc.prob_denominator) for k in range(1, tc.k_max + 1)
    ]
    towers = te.assign_functions(system, laws, config.alpha, config.master_seed)
    validation = te.embedding_validation(system, towers, tc.validation_samples, config.master_seed)
    ks, sums, rejected = te.orbit_oracle_ks(
        system, towers, config.alpha, tc.tower_n, tc.orbits, tc.oracle_samples, config.master_seed
    )
    te.write_orbit_csv(config.output_dir / "orbits.csv", sums)
    passed = bool(validation.passed and ks <= TOWER_KS_LIMIT)
    _write_json(
        config.output_dir / "tower.json",
        {
            "command": "tower",
            "config": config.to_dict(),
            "system": te.system_to_json(system),
            "laws": [law.to_dict() for law in laws],
            "stages": {t.k: t.stage for t in towers},
            "validation": validation.to_json(),
            "orbit_oracle_ks": ks,
            "ks_limit": TOWER_KS_LIMIT,
            "rejected_measure": rejected,
            "pass": passed,
        },
    )
    print(f"{DIVIDER}heights {system.heights}\nvalidation pass={validation.passed}, orbit/oracle KS {ks:.4f}")
    return EXIT_PASS if passed else EXIT_VERDICT_FAILED


def cmd_gof(config: RunConfig) -> int:
    reference = stable_core.make_params(config.alpha, _reference_sigma(config))
    reports = {}
    for n in config.n_grid:
        sample = gof_stats.read_samples_csv(config.output_dir / f"samples_{n}.csv")
        report = gof_stats.gof_report(sample, reference, config.ks_multiple)
        gof_stats.write_qq_csv(config.output_dir / f"qq_{n}.csv", report)
        gof_stats.write_ecf_csv(config.output_dir / f"ecf_{n}.csv", gof_stats.ecf(sample, ECF_THETAS))
        reports[str(n)] = report.to_json()
    passed = all(r["pass"] for r in reports.values())
    _write_json(
        config.output_dir / "gof.json",
        {"command": "gof", "config": config.to_dict(), "reports": reports, "pass": passed},
    )
    return EXIT_PASS if passed else EXIT_VERDICT_FAILED


COMMANDS = {"simulate": cmd_simulate, "bounds": cmd_bounds, "tower": cmd_tower, "gof": cmd_gof}


# argv ---------------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        add_help=True, description="Monte Carlo laboratory for a stable limit theorem of deterministic sums"
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="what to run")
    parser.add_argument("--config", type=str, default=None, help=f"INI file (default: {CONFIG_FILE} next to this script)")
    parser.add_argument("--alpha", type=str, help="stability index, inside (0, 2)")
    parser.add_argument("--n", dest="n_grid", type=str, nargs="+", help="sum lengths")
    parser.add_argument("--replicas", type=str)
    parser.add_argument("--variant", type=str, choices=["X", "Y", "Z"])
    parser.add_argument("--mode", type=str, choices=[m.value for m in sim.Mode])
    parser.add_argument("--seed", dest="master_seed", type=str)
    parser.add_argument("--epsilon-tail", dest="epsilon_tail", type=str)
    parser.add_argument("--budget-draws", dest="budget_draws", type=str)
    parser.add_argument("--output-dir", dest="output_dir", type=str)
    parser.add_argument("--workers", type=str)
    parser.add_argument("--target-sigma", dest="target_sigma", type=str)
    parser.add_argument("--logging-level", dest="logging_level", type=str)
    parser.add_argument("--ks-multiple", dest="ks_multiple", type=str)
    tower = parser.add_argument_group("tower")
    for flag in ("stages", "k_max", "alphabet_cap", "prob_denominator", "tower_n", "orbits", "oracle_samples", "validation_samples"):
        tower.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=str)
    bounds = parser.add_argument_group("bounds")
    bounds.add_argument("--bounds-n", dest="bounds_n_grid", type=str, nargs="+")
    bounds.add_argument("--bounds-replicas", dest="bounds_replicas", type=str)
    bounds.add_argument("--inject-fault", dest="inject_fault", action="store_const", const="true")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Optional[str]]]:
    options = {
        key: getattr(args, key)
        for key in DEFAULTS["options"]
        if key != "n_grid" and getattr(args, key, None) is not None
    }
    if args.n_grid:
        options["n_grid"] = ",".join(args.n_grid)
    tower = {key: getattr(args, key) for key in DEFAULTS["tower"] if getattr(args, key, None) is not None}
    bounds = {"inject_fault": args.inject_fault, "replicas": args.bounds_replicas}
    if args.bounds_n_grid:
        bounds["n_grid"] = ",".join(args.bounds_n_grid)
    return {"options": options, "tower": tower, "bounds": {k: v for k, v in bounds.items() if v is not None}}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    config_path = args.config
    if config_path is None:
        default_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), CONFIG_FILE)
        config_path = default_path if os.path.exists(default_path) else None
    try:
        config = load_config(config_path, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION

    config.output_dir.mkdir(parents=True, exist_ok=True)
    setup_logging(config.logging_level, config.output_dir / "logs")
    log.info(f"{args.command}: {config} (workers={config.workers})")
    try:
        with timing.timed(args.command):
            code = COMMANDS[args.command](config)
    except sim.BudgetError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        log.error(f"budget refusal: {exc}")
        return EXIT_BUDGET
    except (
        stable_core.ParamsError,
        stable_core.DomainError,
        stable_core.GridError,
        stable_core.QuadratureError,
        ab.RangeError,
        ab.ContractError,
        te.DegeneracyError,
        te.CoverageError,
        FileNotFoundError,
    ) as exc:
        print(f"{exc.__class__.__name__}: {exc}", file=sys.stderr)
        log.exception(f"{args.command} could not be constructed")
        return EXIT_CONSTRUCTION
    log.info(f"{args.command} finished with exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
