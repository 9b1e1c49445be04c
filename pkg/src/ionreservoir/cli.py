"""Command line entry point.

    ionreservoir run     --config run.ini --out results/
    ionreservoir compare --config run.ini --out results/ --override run.engines=analytic,master
    ionreservoir rates   --out results/ --override params.kappa_custom=0.1

Each invocation writes ``<experiment>.csv``, ``<experiment>.report.json``
and, unless disabled, ``<experiment>.png`` into the output directory.

Exit status: 0 all checks passed, 1 a check failed, 2 invalid
configuration, 3 numerical instability, 4 truncation leakage.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import U64_MAX, ConfigError, RunConfig, load, write_template
from .experiments import LeakageError, conventions, execute
from .master import IntegrationError
from .model import ParameterError

log = logging.getLogger("ionreservoir")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_LEAKAGE = 0, 1, 2, 3, 4
FLOAT_FORMAT = "%.17g"


def write_csv(path, columns: dict) -> Path:
    """ASCII CSV with a header row; floats keep 17 significant digits."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    lines = [",".join(names)]
    lines += [",".join(FLOAT_FORMAT % v for v in row) for row in data]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ionreservoir", description="Trapped-ion decoherence under a fluctuating trap.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "run the experiment named in the config",
        "compare": "cross-check two or three engines on one grid",
        "rates": "fit the dephasing rate of single Fock levels",
        "template": "write a config file holding every key at its default",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        if name == "template":
            p.add_argument("path", type=Path)
            continue
        p.add_argument("--config", type=Path, default=None, help="INI file with [params] and [run] sections")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (created if missing)")
        p.add_argument("--seed", type=_seed, default=None, help="base seed for the noise generator (u64)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="set section.key=value; repeatable")
        p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _configure(args) -> RunConfig:
    overrides = list(args.override)
    if args.command in ("compare", "rates"):
        overrides.insert(0, f"run.experiment={args.command}")
    if args.no_plot:
        overrides.append("run.plot=false")
    return load(args.config, overrides, seed=args.seed)


def _report(cfg: RunConfig, outcome, wall: float, files: dict, status: int) -> dict:
    return {
        "experiment": cfg.experiment,
        "status": status,
        "passed": outcome.passed,
        "checks": [c.as_dict() for c in outcome.checks],
        "flags": outcome.flags,
        "conventions": conventions(cfg),
        "diagnostics": _jsonable(outcome.diagnostics),
        "config": cfg.as_dict(),
        "seed": cfg.run.base_seed,
        "wall_clock_s": wall,
        "files": files,
        "provenance": {
            "package": "ionreservoir",
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def execute_run(cfg: RunConfig, out: Path) -> int:
    """Run ``cfg``, write the CSV, report and figure into ``out``; return the exit status."""
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    outcome = execute(cfg)
    wall = time.perf_counter() - start
    stem = cfg.experiment
    files = {"csv": write_csv(out / f"{stem}.csv", outcome.columns).name}
    if cfg.run.plot:
        from .plotting import plot_outcome

        files["figure"] = plot_outcome(stem, outcome.columns, out / f"{stem}.png", cfg.params.time_unit).name
    status = EXIT_OK if outcome.passed else EXIT_CHECK
    report = _report(cfg, outcome, wall, files, status)
    (out / f"{stem}.report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="ascii")
    for c in outcome.checks:
        log.info("check %-40s %s (value %.3g, threshold %.3g)", c.name, "pass" if c.passed else "FAIL", c.value, c.threshold)
    for flag in outcome.flags:
        log.info("flag: %s", flag)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "template":
        write_template(args.path)
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _configure(args)
        if args.command == "run" and cfg.experiment in ("compare", "rates"):
            log.info("run: dispatching to %s", cfg.experiment)
        return execute_run(cfg, args.out)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"numerical instability: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except LeakageError as exc:
        print(f"leakage violation: {exc}", file=sys.stderr)
        return EXIT_LEAKAGE


if __name__ == "__main__":
    sys.exit(main())
