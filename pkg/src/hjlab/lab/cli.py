"""Command-line entry point: ``hjlab <experiment> --config cfg.toml --out dir``.

Exit status is 0 when every check passed, 1 when a check failed (or a run
aborted), 2 when the configuration was rejected.  Nothing is written for a
rejected configuration.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..errors import ConfigError, HJLabError, InsufficientSpread
from ..kernels import DEFAULT_BACKEND
from .config import SUBCOMMANDS, load_raw, parse_config
from .experiments import RUNNERS, Report, preflight

log = logging.getLogger("hjlab")

MANIFEST = "manifest.json"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(a) for a in v)
    return str(v)


def _csv_bytes(rows: list[dict]) -> bytes:
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
    return buf.getvalue().encode()


def _dat_bytes(name: str, xy) -> bytes:
    x, y = xy
    lines = [f"# {name}"] + [f"{float(a)!r} {float(b)!r}" for a, b in zip(x, y)]
    return ("\n".join(lines) + "\n").encode()


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n").encode()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def versions() -> dict:
    return {"hjlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "backend": DEFAULT_BACKEND}


def write_outputs(report: Report, cfg, out: Path, preflight_info: dict, wall: float) -> dict:
    """Write report, tables and series under ``out`` plus a manifest hashing every file."""
    out.mkdir(parents=True, exist_ok=True)
    files = {"report.json": _json_bytes(report.to_dict())}
    for name, rows in report.tables.items():
        files[f"{name}.csv"] = _csv_bytes(rows)
    for name, xy in report.series.items():
        files[f"{name}.dat"] = _dat_bytes(name, xy)
    hashes = {}
    for rel, data in sorted(files.items()):
        (out / rel).write_bytes(data)
        hashes[rel] = hashlib.sha256(data).hexdigest()
    manifest = {
        "manifest_version": 1,
        "experiment": report.experiment,
        "passed": report.passed,
        "config": cfg.to_dict(),
        "versions": versions(),
        "scheme": report.runs,
        "feasibility": preflight_info,
        "residuals": {c.name: c.value for c in report.checks},
        "wall_clock": {**report.timings, "total_s": wall},
        "files": hashes,
    }
    (out / MANIFEST).write_bytes(_json_bytes(manifest))
    return manifest


def _error_report(cfg, exc: Exception) -> Report:
    rep = Report(cfg.experiment)
    rep.summary = {"error": f"{type(exc).__name__}: {exc}"}
    rep.check("completed", 1.0, 0.0, "<=", rep.summary["error"])
    return rep


def execute(cfg, out: Path, info: dict, workers: int = 1) -> tuple[int, dict]:
    t0 = time.perf_counter()
    try:
        report = RUNNERS[cfg.experiment](cfg, workers=workers)
    except HJLabError as e:
        log.error("%s aborted: %s", cfg.experiment, e)
        report = _error_report(cfg, e)
    manifest = write_outputs(report, cfg, out, info, time.perf_counter() - t0)
    return (0 if report.passed else 1), manifest


def _job(args):
    raw, exp, out, info = args
    code, _ = execute(parse_config(raw, exp), Path(out), info)
    return code


def _prepare(raw: dict, experiment: str, seed):
    if seed is not None:
        raw = {**raw, "seed": seed}
    cfg = parse_config(raw, experiment)
    return cfg, preflight(cfg)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {SUBCOMMANDS[name]} experiment")
        p.add_argument("--config", required=True, help="JSON or TOML experiment config (or a previous manifest)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    exp = SUBCOMMANDS[args.command]
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        raw = load_raw(args.config)
        jobs = raw.pop("jobs", None)
        if jobs is None:
            cfg, info = _prepare(raw, exp, args.seed)
            out = Path(args.out or cfg.output or os.path.join("runs", exp))
            plans = [(cfg, out, info)]
        else:
            if not isinstance(jobs, list) or not jobs:
                raise ConfigError("jobs must be a non-empty list")
            base = Path(args.out or raw.get("output") or os.path.join("runs", exp))
            plans = []
            for i, job in enumerate(jobs):
                name = str(job.pop("name", f"job{i:02d}")) if isinstance(job, dict) else None
                if name is None:
                    raise ConfigError("each job must be a table")
                cfg, info = _prepare({**raw, **job}, exp, args.seed)
                plans.append((cfg, base / name, info))
    except (ConfigError, InsufficientSpread) as e:
        print(f"hjlab: invalid configuration: {e}", file=sys.stderr)
        return 2
    if len(plans) == 1:
        code, manifest = execute(plans[0][0], plans[0][1], plans[0][2], workers=args.workers)
        _print_checks(manifest)
        return code
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            codes = list(ex.map(_job, [(c.to_dict(), exp, str(o), i) for c, o, i in plans]))
    else:
        codes = [execute(c, o, i)[0] for c, o, i in plans]
    for (c, o, _), code in zip(plans, codes):
        print(f"{o}: {'PASS' if code == 0 else 'FAIL'}")
    return max(codes)


def _print_checks(manifest: dict):
    cfg = manifest["config"]
    for name, value in manifest["residuals"].items():
        print(f"{manifest['experiment']}.{name} = {value:.6g}")
    print(f"{manifest['experiment']}: {'PASS' if manifest['passed'] else 'FAIL'} ({cfg['model']['name']})")


if __name__ == "__main__":
    sys.exit(main())
