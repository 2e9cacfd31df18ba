"""Command-line harness: ``run <config>``, ``sweep <config>``, ``atlas <params>``.

Exit codes: 0 all checks pass, 1 some check failed, 2 configuration error,
3 solver failure.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
import hashlib
import itertools
import json
import logging
import os
import sys

from .config import ExperimentConfig, load_config, parse_config
from .errors import ConfigError, InvalidParameter, SolverError
from .exponents import ParameterSet, atlas_fieldnames, atlas_row
from .report import CheckRow, fmt, write_csv, write_report
from .scenarios import run_scenario

log = logging.getLogger("degsing")

EXIT_PASS, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
DIAG_FIELDS = ("run", "level", "n", "iteration", "residual_l2", "damping", "sup_u", "converged",
               "d_1", "d_10", "d_100")


@dataclass
class RunRecord:
    config_echo: str
    run_dir: str
    status: int
    started: str
    finished: str
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    error: str = None

    @property
    def failed(self):
        return sum(1 for r in self.rows if not r.passed)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _fresh_dir(root, stem):
    os.makedirs(root, exist_ok=True)
    path = os.path.join(root, stem)
    j = 1
    while os.path.exists(path):
        j += 1
        path = os.path.join(root, f"{stem}-{j}")
    os.makedirs(path)
    return path


def _config_hash(echo):
    return hashlib.sha1(echo.encode()).hexdigest()[:10]


def _diag_rows(diagnostics):
    rows = []
    for label, diag in diagnostics:
        for row in diag.rows():
            rows.append({"run": label, **row})
    return rows


def _write_outputs(run_dir, rows, fld, diagnostics, tables=None):
    paths = {
        "report": os.path.join(run_dir, "report.csv"),
        "field": os.path.join(run_dir, "field.txt"),
        "diagnostics": os.path.join(run_dir, "diagnostics.csv"),
    }
    write_report(paths["report"], rows)
    with open(paths["field"], "w") as fh:
        fh.write(fld.to_text() if fld is not None else "")
    write_csv(paths["diagnostics"], DIAG_FIELDS, _diag_rows(diagnostics))
    for name, (fieldnames, trows) in (tables or {}).items():
        paths[name] = os.path.join(run_dir, name)
        write_csv(paths[name], fieldnames, trows)
    return paths


def run_experiment(config: ExperimentConfig, out_root=None, *, run_dir=None) -> RunRecord:
    """Run one scenario into a fresh directory and return its record."""
    echo = config.echo()
    if run_dir is None:
        run_dir = _fresh_dir(out_root or config["output.dir"],
                             f"{config.scenario}-{_config_hash(echo)}")
    else:
        os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.echo"), "w") as fh:
        fh.write(echo)
    started = _now()
    error = None
    try:
        result = run_scenario(config)
        rows, fld, diags, summary, tables = (result.rows, result.field, result.diagnostics,
                                             result.summary, result.tables)
        status = EXIT_PASS if all(r.passed for r in rows) else EXIT_CHECK
    except SolverError as exc:
        log.error("solver failure: %s", exc)
        error = str(exc)
        status = EXIT_SOLVER
        diags = []
        if isinstance(exc.diagnostics, tuple) and exc.diagnostics:
            diags = [("failed", exc.diagnostics[0])]
        rows = [CheckRow(config.scenario, "solver", "converged", type(exc).__name__, "", False)]
        fld, summary, tables = exc.field, {}, {}
    except (InvalidParameter, ConfigError) as exc:
        log.error("invalid configuration: %s", exc)
        error = str(exc)
        status = EXIT_CONFIG
        rows, fld, diags, summary, tables = [], None, [], {}, {}
    paths = _write_outputs(run_dir, rows, fld, diags, tables)
    paths["config"] = os.path.join(run_dir, "config.echo")
    rec = RunRecord(echo, run_dir, status, started, _now(), rows, summary, paths, error)
    with open(os.path.join(run_dir, "record.json"), "w") as fh:
        json.dump({"started": rec.started, "finished": rec.finished, "status": status,
                   "error": error, "checks": len(rows), "failed": rec.failed,
                   "summary": {k: fmt(v) for k, v in summary.items()}, "paths": paths},
                  fh, indent=2, sort_keys=True)
    return rec


def _run_point(args):
    idx, echo, sweep_dir = args
    cfg = parse_config(echo)
    rec = run_experiment(cfg, run_dir=os.path.join(sweep_dir, f"point-{idx:04d}"))
    return idx, rec.status, len(rec.rows), rec.failed, rec.run_dir, rec.summary


def run_sweep(config: ExperimentConfig, out_root=None, workers=None):
    """Run every point of the sweep; returns (summary rows, sweep directory)."""
    points = list(config.points())
    echo = config.echo()
    sweep_dir = _fresh_dir(out_root or config["output.dir"],
                           f"{config.scenario}-sweep-{_config_hash(echo)}")
    with open(os.path.join(sweep_dir, "config.echo"), "w") as fh:
        fh.write(echo)
    jobs = [(i, p.echo(), sweep_dir) for i, p in enumerate(points)]
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(jobs) == 1:
        results = [_run_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_point, jobs))
    results.sort(key=lambda t: t[0])
    axes = sorted(config.sweep)
    extra = sorted({k for *_, summ in results for k in summ})
    rows = []
    for (idx, status, n, failed, run_dir, summ), point in zip(results, points):
        row = {"point": idx, **{a: point[a] for a in axes},
               "status": {0: "pass", 1: "fail", 2: "config-error", 3: "solver-failure"}[status],
               "checks": n, "failed": failed, "run_dir": os.path.relpath(run_dir, sweep_dir)}
        row.update({k: summ.get(k) for k in extra})
        rows.append(row)
    fieldnames = ["point", *axes, "status", "checks", "failed", "run_dir",
                  *[k for k in extra if k not in axes]]
    write_csv(os.path.join(sweep_dir, "summary.csv"), fieldnames, rows)
    return rows, sweep_dir


ATLAS_KEYS = {"N": "dim_N", "p": "p", "theta": "theta", "gamma1": "gamma1", "gamma2": "gamma2",
              "m": "m"}


def parse_atlas_params(tokens):
    """``key=value`` tokens; values are numbers, ``a:b:step`` ranges or comma lists."""
    axes = {}
    for tok in tokens:
        if "=" not in tok:
            raise ConfigError(f"expected key=value, got {tok!r}", None, tok)
        key, val = tok.split("=", 1)
        if key not in ATLAS_KEYS:
            raise ConfigError(f"unknown atlas parameter {key!r}", None, key)
        try:
            if ":" in val:
                a, b, step = (float(x) for x in val.split(":"))
                if not step > 0 or b < a:
                    raise ValueError("need a <= b and step > 0")
                count = int((b - a) / step + 1e-9) + 1
                axes[key] = [a + i * step for i in range(count)]
            else:
                axes[key] = [float(x) for x in val.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", None, key) from None
    for key in ("N", "p"):
        if key not in axes:
            raise ConfigError(f"atlas needs {key}", None, key)
    return axes


def atlas_rows(axes):
    keys = list(axes)
    rows = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        kw = {ATLAS_KEYS[k]: v for k, v in zip(keys, combo)}
        try:
            rows.append(atlas_row(ParameterSet(**kw)))
        except InvalidParameter as exc:
            raise ConfigError(f"inadmissible point {dict(zip(keys, combo))}: {exc}") from None
    return rows


def build_parser():
    ap = argparse.ArgumentParser(prog="degsing", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="experiment config file (key = value lines)")
        sp.add_argument("--out", help="output root, default output.dir")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--workers", type=int, help="worker processes for sweeps")
    sp = sub.add_parser("atlas")
    sp.add_argument("params", nargs="+", help="name=value, name=a,b,c or name=start:stop:step")
    sp.add_argument("--out", help="CSV path, default stdout")
    return ap


def _print_rows(rows, stream):
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.check}: measured {fmt(r.measured)} "
              f"(predicted {fmt(r.predicted)}, {r.tolerance})", file=stream)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "atlas":
            rows = atlas_rows(parse_atlas_params(args.params))
            if args.out:
                write_csv(args.out, atlas_fieldnames(), rows)
            else:
                import csv
                w = csv.DictWriter(sys.stdout, fieldnames=atlas_fieldnames(), lineterminator="\n")
                w.writeheader()
                w.writerows(rows)
            return EXIT_PASS
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.values["seed"] = args.seed
    except ConfigError as exc:
        where = "" if exc.line is None else f" (line {exc.line})"
        key = "" if exc.key is None else f" [{exc.key}]"
        print(f"config error{where}{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "run":
        if cfg.sweep:
            print("config error: config declares sweep axes; use 'sweep'", file=sys.stderr)
            return EXIT_CONFIG
        rec = run_experiment(cfg, args.out)
        _print_rows(rec.rows, sys.stdout)
        if rec.error:
            print(f"error: {rec.error}", file=sys.stderr)
        print(f"run directory: {rec.run_dir}")
        return rec.status
    rows, sweep_dir = run_sweep(cfg, args.out, args.workers)
    statuses = {r["status"] for r in rows}
    print(f"{len(rows)} points, {sum(r['status'] == 'pass' for r in rows)} pass; "
          f"summary: {os.path.join(sweep_dir, 'summary.csv')}")
    if "solver-failure" in statuses:
        return EXIT_SOLVER
    if "config-error" in statuses:
        return EXIT_CONFIG
    return EXIT_CHECK if statuses - {"pass"} else EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
