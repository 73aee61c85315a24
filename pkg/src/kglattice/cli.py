"""Command line: ``kglattice list`` and ``kglattice run <experiment> ...``.

``run`` writes ``report.json`` and one CSV per table into the output
directory and exits 0 exactly when every assertion passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from . import io
from .errors import ConfigError, KGLatticeError
from .experiments import REGISTRY, SCHEMA_VERSION, ExperimentResult

log = logging.getLogger("kglattice")

# keys a config file may set; anything else is treated as a typo
KNOWN_KEYS = {
    "experiment", "seed", "out",
    "Nx", "Nt", "dx", "dt", "metric", "metric_amplitude",
    "xi", "mass",
    "sources", "cases", "order2_cases", "perturbations", "grids", "length",
}


def validate_config(cfg: dict[str, str]) -> None:
    unknown = sorted(k for k in cfg if k not in KNOWN_KEYS and not k.startswith("tol."))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def list_lines() -> list[str]:
    return [f"{e.name}: {e.description} [{e.anchor}]" for e in REGISTRY.values()]


def list_json() -> str:
    return json.dumps(
        [{"name": e.name, "description": e.description, "anchor": e.anchor} for e in REGISTRY.values()],
        indent=2,
    )


def write_tables(result: ExperimentResult, out: Path) -> list[str]:
    names = []
    for table, (header, rows) in sorted(result.tables.items()):
        name = f"{result.experiment}_{table}.csv"
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        names.append(name)
    return names


def build_report(result: ExperimentResult, cfg: dict[str, str], runtime: float, csvs: list[str]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": result.experiment,
        "seed": result.seed,
        "config": dict(sorted(cfg.items())),
        "passed": result.passed,
        "assertions": [
            {"name": a.name, "value": a.value, "bound": a.bound, "passed": a.passed}
            for a in result.assertions
        ],
        "values": {k: float(v) for k, v in result.values.items()},
        "tables": csvs,
        "runtime_seconds": round(runtime, 3),
    }


def run_experiment(name: str, cfg: dict[str, str], seed: int, out: str | Path) -> dict:
    """Run one registered experiment, write its outputs and return the report."""
    if name not in REGISTRY:
        raise ConfigError(f"unknown experiment {name!r}; see 'kglattice list'")
    validate_config(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        result = REGISTRY[name].run(cfg, seed)
    except KGLatticeError as exc:
        raise type(exc)(f"{name}: {exc}") from exc
    runtime = time.perf_counter() - t0
    csvs = write_tables(result, out)
    report = build_report(result, cfg, runtime, csvs)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kglattice", description="Lattice Klein-Gordon experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    lp = sub.add_parser("list", help="show the registered experiments")
    lp.add_argument("--json", action="store_true", help="machine-readable output")
    rp = sub.add_parser("run", help="run one experiment")
    rp.add_argument("experiment")
    rp.add_argument("--config", help="key = value text file")
    rp.add_argument("--seed", type=int, help="required, here or in the config")
    rp.add_argument("--out", help="output directory, here or in the config")
    rp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        print(list_json() if args.json else "\n".join(list_lines()))
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = io.read_config(args.config) if args.config else {}
        if "experiment" in cfg and cfg["experiment"] != args.experiment:
            raise ConfigError(f"config is for {cfg['experiment']!r}, not {args.experiment!r}")
        seed = args.seed if args.seed is not None else cfg.get("seed")
        if seed is None:
            raise ConfigError("a seed is required (--seed or 'seed =' in the config)")
        out = args.out or cfg.get("out")
        if out is None:
            raise ConfigError("an output directory is required (--out or 'out =' in the config)")
        report = run_experiment(args.experiment, cfg, int(seed), out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for a in report["assertions"]:
        print(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']}: {a['value']:.3e} ({a['bound']})")
    log.info("runtime %.1f s, outputs in %s", report["runtime_seconds"], out)
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
