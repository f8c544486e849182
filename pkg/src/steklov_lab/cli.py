"""
Command line entry point ``steklov-lab``.

    steklov-lab spectrum --config disk.json --out results/
    steklov-lab oracle annulus --r-inner 0.5 --r-outer 1 --count 8

Exit codes: 0 success, 1 tolerance violation, 2 configuration error,
3 solver error.  Outputs are written only after a run completes, by this
process alone and in sorted file-name order.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from . import reports
from .assembly import SolverError
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .experiments import RUNNERS, Outcome
from .fields import MetricError
from .mesh import MeshError
from .oracles import OracleError, oracle_table
from .steklov import PreconditionError
from .variation import StepTooLargeError

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("steklov_lab")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment config (JSON)")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for batches")
    p.add_argument("--verbose", "-v", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steklov-lab",
        description="Steklov spectra, metric variations and genericity experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _common(sub.add_parser(name, help=f"run the {name} experiment"))
    _common(sub.add_parser("run", help="run the experiment named in --config"))
    o = sub.add_parser("oracle", help="closed-form spectrum table (CSV)")
    o.add_argument("domain", nargs="?", choices=("disk", "annulus"))
    o.add_argument("--radius", type=float, default=1.0)
    o.add_argument("--r-inner", type=float, default=0.5)
    o.add_argument("--r-outer", type=float, default=1.0)
    o.add_argument("--count", type=int, default=11)
    _common(o)
    return parser


def _write(out_dir: Path, files: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        (out_dir / name).write_text(files[name], encoding="utf-8", newline="\n")
        log.info("wrote %s", out_dir / name)


def _resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
        if args.command not in ("run", "oracle") and cfg.experiment != args.command:
            raise ConfigError(f"config is for experiment {cfg.experiment!r}, "
                              f"not {args.command!r}")
    elif args.command == "run":
        raise ConfigError("'run' needs --config")
    else:
        cfg = ExperimentConfig.from_dict({"experiment": args.command})
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg.with_overrides(seed=args.seed, output_dir=None if args.out is None else str(args.out))


def _oracle(args) -> Outcome:
    if args.config is not None:
        cfg = load_config(args.config)
        d = cfg.domain
        domain = args.domain or d.kind
        params = {"radius": d.radius, "r_inner": d.r_inner, "r_outer": d.r_outer}
        count = cfg.eigen_count
    else:
        domain = args.domain or "disk"
        params = {"radius": args.radius, "r_inner": args.r_inner, "r_outer": args.r_outer}
        count = args.count
    if domain not in ("disk", "annulus"):
        raise ConfigError(f"no closed-form oracle for domain {domain!r}")
    if count < 1:
        raise ConfigError("--count must be >= 1")
    try:
        rows = oracle_table(domain, params, count)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Outcome()
    out.files["oracle.csv"] = reports.csv_text(rows, ["index", "value", "mode"])
    return out


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        if args.command == "oracle":
            outcome = _oracle(args)
            out_dir = args.out or Path("out")
        else:
            cfg = _resolve_config(args)
            runner = RUNNERS[cfg.experiment]
            if cfg.experiment in ("scan", "wucp"):
                outcome = runner(cfg, threads=args.threads)
            else:
                outcome = runner(cfg)
            out_dir = Path(cfg.output_dir)
    except (ConfigError, MeshError, MetricError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, PreconditionError, StepTooLargeError, OracleError, LinAlgError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write(out_dir, outcome.files)
    for c in outcome.checks:
        log.info("%s %s = %.3e (%s)", "ok  " if c.passed else "FAIL", c.name, c.value, c.limit)
    if not outcome.passed:
        bad = ", ".join(c.name for c in outcome.checks if not c.passed)
        print(f"tolerance violation: {bad}", file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
