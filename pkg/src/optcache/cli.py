"""Command-line experiment runner.

``run`` simulates one config and writes ``metrics.csv``, ``summary.json``
and ``run.lock``; ``sweep`` runs a grid of configs in parallel, one output
directory per cell; ``validate`` only checks a config.  Failures exit
nonzero with a one-line JSON error on stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import default_checkpoints
from .config import ConfigError, Experiment, ExperimentConfig, load_config, with_overrides
from .core import InvalidInput
from .projection import ProjectionError
from .sim import evaluate, run_policy
from .workloads import TraceError

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_PROJECTION = 4
EXIT_INPUT = 5
EXIT_SWEEP = 6


def _fmt(v) -> str:
    """Shortest round-trip text of a float; blank for NaN."""
    v = float(v)
    if math.isnan(v):
        return ""
    if v.is_integer() and abs(v) < 2 ** 53:
        return str(int(v))
    return repr(v)


def write_metrics(path: Path, columns, rows) -> None:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metrics(path) -> tuple:
    """Inverse of :func:`write_metrics`: ``(columns, rows)`` with NaN for blanks."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    columns = text[0].split(",")
    rows = np.array([[float(c) if c else np.nan for c in line.split(",")] for line in text[1:]])
    return columns, rows.reshape(len(text) - 1, len(columns))


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def lock_data(cfg: ExperimentConfig, exp: Experiment) -> dict:
    data = cfg.model_dump(mode="json", exclude={"sweep"})
    data["_resolved"] = {
        "version": __version__,
        "horizon": exp.horizon,
        "dim": exp.net.dim,
        "trace_sha256": exp.trace_sha256,
        "seeds": {"master": cfg.seed,
                  "predictors": [p.seed if p.seed is not None else cfg.seed
                                 for p in cfg.predictors]},
    }
    return data


def run_experiment(cfg: ExperimentConfig, out: Path) -> dict:
    """Simulate ``cfg`` and write its outputs to ``out``; returns the summary."""
    if cfg.sweep is not None:
        cfg = cfg.model_copy(update={"sweep": None})
    exp = Experiment(cfg)
    space = exp.space()
    tr = run_policy(exp.sim, exp.policy, space, exp.prices, exp.budgets,
                    record_digests=cfg.output.digests)
    cps = default_checkpoints(exp.horizon, cfg.output.checkpoint_stride)
    ev = evaluate(tr, cps, exp.prices, exp.budgets, s_max=exp.s_max)
    summary = dict(ev.summary)
    summary["predictors"] = [p.name or p.kind for p in cfg.predictors]
    summary["max_projection_iterations"] = tr.projection_iterations
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(out / "metrics.csv", ev.columns, ev.rows)
    (out / "summary.json").write_text(_dump(summary), encoding="utf-8")
    # the lock is itself a valid config (JSON is YAML); _resolved is dropped on reload
    (out / "run.lock").write_text(_dump(lock_data(cfg, exp)), encoding="utf-8")
    if cfg.output.digests:
        (out / "digests.txt").write_text("\n".join(tr.digests) + "\n", encoding="utf-8")
    return summary


# --------------------------------------------------------------------------
# errors


def _classify(e: BaseException) -> tuple:
    if isinstance(e, ConfigError):
        return EXIT_CONFIG, "config"
    if isinstance(e, TraceError) or isinstance(e, OSError):
        return EXIT_IO, "io"
    if isinstance(e, ProjectionError):
        return EXIT_PROJECTION, "projection"
    if isinstance(e, InvalidInput):
        return EXIT_INPUT, "input"
    return 1, "internal"


def _error_record(e: BaseException) -> dict:
    code, kind = _classify(e)
    rec = {"error": kind, "exit_code": code, "message": str(e)}
    rep = getattr(e, "report", None)
    if rep is not None:
        rec["diagnostics"] = {"iterations": rep.iterations, "residual": rep.residual,
                              "kkt": rep.kkt, "distance": rep.distance, "method": rep.method}
    return rec


def _fail(e: BaseException) -> int:
    rec = _error_record(e)
    sys.stderr.write(json.dumps(rec, sort_keys=True) + "\n")
    return rec["exit_code"]


# --------------------------------------------------------------------------
# sweep


def sweep_cells(cfg: ExperimentConfig) -> list:
    """Override sets of the sweep; empty for a missing or empty sweep."""
    sw = cfg.sweep
    if sw is None:
        return []
    if sw.cells is not None:
        return [dict(c) for c in sw.cells]
    if not sw.grid or any(len(v) == 0 for v in sw.grid.values()):
        return []
    keys = list(sw.grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(sw.grid[k] for k in keys))]


def _cell_name(k: int, overrides: dict) -> str:
    parts = [f"{key}={val}" for key, val in overrides.items()]
    label = "_".join(parts).replace("/", "-").replace(" ", "")
    return f"cell-{k:03d}" + (f"_{label}" if label and len(label) <= 80 else "")


def _run_cell(args) -> dict:
    cfg_json, overrides, out = args
    try:
        cfg = with_overrides(ExperimentConfig.model_validate_json(cfg_json), overrides)
        run_experiment(cfg, Path(out))
        return {"status": "ok"}
    except Exception as e:  # a failing cell must not stop the sweep
        return {"status": "error", **_error_record(e)}


def run_sweep(cfg: ExperimentConfig, out: Path, workers: int | None = None) -> list:
    cells = sweep_cells(cfg)
    if not cells:
        return []
    base = cfg.model_copy(update={"sweep": None}).model_dump_json()
    jobs = [(base, ov, str(out / _cell_name(k, ov))) for k, ov in enumerate(cells)]
    workers = workers or (cfg.sweep.workers if cfg.sweep else None)
    if workers == 1:
        results = [_run_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    index = []
    for (_, ov, path), res in zip(jobs, results):
        index.append({"dir": Path(path).name, "overrides": ov, **res})
        if res["status"] != "ok":
            Path(path).mkdir(parents=True, exist_ok=True)
            (Path(path) / "error.json").write_text(_dump(res), encoding="utf-8")
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(_dump(index), encoding="utf-8")
    return index


# --------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="optcache", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate one config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=None, help="override the master seed")
    s = sub.add_parser("sweep", help="run every cell of the config's sweep block")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=None)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            Experiment(cfg)  # also checks the trace and predictor wiring
            print(json.dumps({"valid": True, "config": str(args.config)}))
            return 0
        out = Path(args.out)
        if args.command == "run":
            if args.seed is not None:
                if not 0 <= args.seed < 2 ** 64:
                    raise ConfigError("seed must be an unsigned 64-bit integer")
                cfg = cfg.model_copy(update={"seed": args.seed})
            summary = run_experiment(cfg, out)
            print(json.dumps({"out": str(out), "regret": summary["regret"]}))
            return 0
        index = run_sweep(cfg, out, args.workers)
        failed = [c for c in index if c["status"] != "ok"]
        print(json.dumps({"out": str(out), "cells": len(index), "failed": len(failed)}))
        if failed:
            sys.stderr.write(json.dumps({"error": "sweep", "exit_code": EXIT_SWEEP,
                                         "failed": [c["dir"] for c in failed]}) + "\n")
            return EXIT_SWEEP
        return 0
    except Exception as e:  # surfaced as a machine-readable error
        return _fail(e)


if __name__ == "__main__":
    raise SystemExit(main())
