"""Command line: one subcommand per experiment.

Exit codes: 0 all checks pass, 1 check failures, 2 configuration or
infrastructure errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ConfigError, config_hash, load, validate
from .presets import preset
from .reports import write_csv, write_json, write_plotdata

log = logging.getLogger("fiberlap")


@dataclass
class RunManifest:
    experiment: str
    config_hash: str
    basis_hash: str
    version: str
    seed: int
    wall_time: float = 0.0
    files: list = field(default_factory=list)
    passed: bool = False
    error: str = ""
    thresholds: dict = field(default_factory=dict)


def build_config(experiment: str, path=None, seed=None, jobs=None, strict=False, out=None) -> dict:
    raw = load(path) if path else preset(experiment)
    if raw.get("experiment", experiment) != experiment:
        raise ConfigError(f"config experiment {raw['experiment']!r} does not match subcommand "
                          f"{experiment!r}")
    raw["experiment"] = experiment
    if seed is not None:
        raw["seed"] = seed
    if jobs is not None:
        raw["jobs"] = jobs
    if strict:
        raw["strict"] = True
    if out is not None:
        raw["out"] = str(out)
    return validate(raw)


def run_experiment(cfg: dict, out_dir) -> RunManifest:
    """Execute the pipeline and flush reports; errors propagate after a partial flush."""
    from .experiments import PIPELINES, THRESHOLDS

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp = cfg["experiment"]
    man = RunManifest(exp, config_hash(cfg), cfg["effective"]["grid_digest"], __version__,
                      cfg["seed"], thresholds={**THRESHOLDS, **cfg.get("thresholds", {})})
    t0 = time.perf_counter()
    try:
        res = PIPELINES[exp](cfg)
    except Exception as exc:
        man.error = f"{type(exc).__name__}: {exc}"
        man.wall_time = time.perf_counter() - t0
        write_json(out / "manifest.json", asdict(man))
        raise
    for name, rep in res.reports.items():
        write_csv(out / f"{name}.csv", rep)
        man.files.append(f"{name}.csv")
    for name, (x, y) in res.plots.items():
        write_plotdata(out / f"{name}.dat", x, y, header=name)
        man.files.append(f"{name}.dat")
    summary = {"experiment": exp, "passed": res.passed, "effective": cfg["effective"],
               "summary": res.summary}
    write_json(out / "summary.json", summary)
    man.files.append("summary.json")
    man.passed = bool(res.passed)
    man.wall_time = time.perf_counter() - t0
    write_json(out / "manifest.json", asdict(man))
    return man


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="fiberlap", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", type=Path, help="YAML or JSON config (defaults to the desk preset)")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--jobs", type=int, default=None, help="worker processes")
    p.add_argument("--seed", type=int, default=None, help="seed for random suites")
    p.add_argument("--strict", action="store_true", help="treat warnings (degeneracy, snapping) as errors")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args.experiment, args.config, args.seed, args.jobs, args.strict, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.get("out") or f"runs/{args.experiment}")
    for s_req, s_eff in zip(np.atleast_1d(cfg["model"]["sigma"]), cfg["effective"]["sigma"]):
        if s_req and s_req != s_eff:
            print(f"sigma {s_req} -> {s_eff} (snapped)", file=sys.stderr)
    try:
        man = run_experiment(cfg, out)
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"{args.experiment} failed: {exc}", file=sys.stderr)
        log.debug(traceback.format_exc())
        return 2
    print(f"{args.experiment}: {'PASS' if man.passed else 'FAIL'} ({man.wall_time:.1f} s) -> {out}")
    return 0 if man.passed else 1


if __name__ == "__main__":
    sys.exit(main())
