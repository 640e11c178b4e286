"""Command line entry point: ``pdeopt run | verify | compare``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, admm
from .field import ScalarField, SeededRng, format_float, l2_norm, read_csv, write_csv
from .io import atomic_write_json, atomic_write_text
from .pinnsolve import UnsupportedSolverError
from .problems import ConfigError, desk_overrides, make_problem, preset_defaults

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
METHODS = ("ota", "ato", "reference")
FIELDS = ("u", "y", "z", "lam")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        out[key] = value
    return out


def resolve_run(args) -> tuple[str, str, dict]:
    """Merge config file, ``--set`` pairs and flags into (problem id, method, overrides)."""
    values = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        values.update(parse_config_text(text, args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    problem_id = args.problem or values.pop("problem", None)
    values.pop("problem", None)
    method = args.method or values.pop("method", None) or "ota"
    values.pop("method", None)
    if problem_id is None:
        raise ConfigError("no problem given (use --problem or problem= in the config file)")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r} (choose from {', '.join(METHODS)})")
    if args.seed is not None:
        values["seed"] = args.seed
    if getattr(args, "desk", False):
        values = {**desk_overrides(problem_id), **values}
    return problem_id, method, values


@contextlib.contextmanager
def thread_cap():
    """Honour ``PDEOPT_THREADS`` for the BLAS/FFT pools."""
    raw = os.environ.get("PDEOPT_THREADS")
    if not raw:
        yield
        return
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"PDEOPT_THREADS must be a positive integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


def _finite_or_none(x):
    x = float(x)
    return x if np.isfinite(x) else None


def write_run_artifacts(out: Path, problem, method: str, overrides: dict, rep: admm.ConvergenceReport) -> dict:
    st = rep.state
    fields = {"u": st.u, "y": st.y, "z": st.z, "lam": st.lam}
    written = []
    for name in FIELDS:
        f = fields[name]
        if f is not None:
            write_csv(f, out / f"{name}.csv")
            written.append(f"{name}.csv")
    atomic_write_text(out / "trace.csv", rep.trace_csv())
    metrics = {}
    if st.u is not None and st.z is not None:
        metrics = {k: _finite_or_none(v) for k, v in problem.metrics(st.u, st.y, st.z).items()}
    report = {
        "tool": "pdeopt",
        "version": __version__,
        "problem": problem.id,
        "method": method,
        "seed": problem.settings["seed"],
        "settings": dict(problem.settings),
        "lattice": problem.lattice.to_dict(),
        "status": "failed" if rep.failed else "ok",
        "message": rep.message,
        "iterations": len(rep.rows),
        "metrics": metrics,
        "trace": [{k: (_finite_or_none(v) if k != "k" else v) for k, v in r.items()} for r in rep.rows],
        "training": rep.training,
        "fields": written,
        "wall_time_s": rep.wall_time,
        "platform": {"python": platform.python_version(), "numpy": np.__version__},
    }
    provenance = {
        "problem": problem.id,
        "preset_defaults": preset_defaults(problem.id),
        "overrides": {k: problem.settings[k] for k in overrides},
    }
    atomic_write_json(out / "preset.json", provenance)
    atomic_write_json(out / "report.json", report)
    return report


def cmd_run(args) -> int:
    problem_id, method, overrides = resolve_run(args)
    problem = make_problem(problem_id, overrides)
    out = Path(args.out or f"runs/{problem_id}-{method}-seed{problem.settings['seed']}")
    with thread_cap():
        if method == "reference":
            rep = admm.reference_run(problem)
        else:
            cfg = admm.admm_config(problem, method)
            train = admm.train_config(problem)

            def progress(k, res):
                if not args.quiet:
                    loss = res.trace[-1][1] if res.trace else float("nan")
                    print(f"outer {k + 1}/{cfg.iterations}: {len(res.trace)} training steps, loss {loss:.4e}",
                          file=sys.stderr, flush=True)

            rep = admm.admm_run(problem, cfg, train, SeededRng(problem.settings["seed"]), progress)
    report = write_run_artifacts(out, problem, method, overrides, rep)
    summary = ", ".join(f"{k}={v:.4g}" for k, v in report["metrics"].items() if v is not None)
    print(f"{problem_id}/{method}: {report['iterations']} iterations, {summary} -> {out}")
    if rep.failed:
        print(f"numerical failure: {rep.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    if args.suite not in (*verify.SUITES, "all"):
        raise ConfigError(f"unknown suite {args.suite!r} (choose from {', '.join([*verify.SUITES, 'all'])})")
    with thread_cap():
        rows = verify.run_suite(args.suite, args.seed or 0)
    for c in rows:
        tail = f"  [{c.detail}]" if c.detail else ""
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name}{tail}")
    failed = sum(not c.ok for c in rows)
    print(f"{len(rows) - failed} passed, {failed} failed")
    return EXIT_VERIFY if failed else EXIT_OK


def _report_dir(path: str) -> Path:
    p = Path(path)
    return p.parent if p.name == "report.json" else p


def compare_fields(dir_a: Path, dir_b: Path, names=("u", "y")) -> list:
    """Relative L2 differences ``||a - b|| / ||b||`` of the final fields."""
    rows = []
    for name in names:
        fa, fb = dir_a / f"{name}.csv", dir_b / f"{name}.csv"
        if not (fa.exists() and fb.exists()):
            continue
        a, b = read_csv(fa), read_csv(fb)
        if a.lattice != b.lattice:
            raise ValueError(f"{name}: the two reports live on different lattices")
        diff = l2_norm(ScalarField(a.lattice, a.values - b.values))
        ref = l2_norm(b)
        rows.append((name, diff / ref if ref > 0 else (0.0 if diff == 0 else float("inf"))))
    if not rows:
        raise ConfigError("no common field CSVs to compare")
    return rows


def cmd_compare(args) -> int:
    import json

    da, db = _report_dir(args.report_a), _report_dir(args.report_b)
    try:
        ra = json.loads((da / "report.json").read_text())
        rb = json.loads((db / "report.json").read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read report: {exc}") from None
    if ra["problem"] != rb["problem"]:
        raise ConfigError(f"reports are for different problems ({ra['problem']} vs {rb['problem']})")
    try:
        rows = compare_fields(da, db)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "method_a", "method_b", "relative_l2_difference"])
    for name, d in rows:
        w.writerow([name, ra["method"], rb["method"], format_float(d)])
    text = buf.getvalue()
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdeopt", description="ADMM-PINN solvers for nonsmooth PDE-constrained optimization.")
    ap.add_argument("--version", action="version", version=f"pdeopt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write its report")
    run.add_argument("--problem", choices=("ex1", "ex2", "ex3", "ex4"))
    run.add_argument("--method", help="ota, ato or reference (finite-element baseline)")
    run.add_argument("--seed", type=int)
    run.add_argument("--config", help="flat key=value file with dotted keys")
    run.add_argument("--out", help="output directory")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting (repeatable)")
    run.add_argument("--desk", action="store_true",
                     help="reduced training budgets for one CPU core (explicit --set values still win)")
    run.add_argument("--quiet", action="store_true", help="no per-iteration progress on stderr")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run property suites")
    ver.add_argument("suite", help="jets, prox, optim, fem or all")
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=cmd_verify)

    cmp_ = sub.add_parser("compare", help="relative L2 differences between two reports")
    cmp_.add_argument("report_a")
    cmp_.add_argument("report_b", help="reference report (denominator)")
    cmp_.add_argument("--out", help="also write the table to this CSV file")
    cmp_.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, UnsupportedSolverError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
