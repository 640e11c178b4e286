"""Acceptance suite: one PASS/FAIL line per criterion, at the published tolerances.

The experiment runs use the desk budgets of each preset (``desk_overrides``)
and fixed seeds; every other constant keeps its published value.  The whole
suite takes about two hours on one CPU core.  Run it alone with

    python3 tests/test_acceptance.py

or through pytest, where each criterion is one test.
"""
from __future__ import annotations

import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from pdeopt import admm, verify
from pdeopt.field import SeededRng, l2_norm
from pdeopt.problems import as_jet, desk_overrides, make_problem

_RUNS = {}


def run(pid: str, method: str, **overrides):
    """Run (or reuse) one experiment; returns ``(problem, report)``."""
    key = (pid, method, tuple(sorted(overrides.items())))
    if key not in _RUNS:
        p = make_problem(pid, {**desk_overrides(pid), **overrides})
        t = time.perf_counter()
        if method == "reference":
            rep = admm.reference_run(p)
        else:
            rep = admm.admm_run(p, admm.admm_config(p, method), admm.train_config(p), SeededRng(p["seed"]))
        print(f"  [{pid}/{method} {overrides or ''}: {len(rep.rows)} iterations in {time.perf_counter() - t:.0f}s]",
              file=sys.stderr, flush=True)
        _RUNS[key] = (p, rep)
    return _RUNS[key]


def line(label: str, value: float, bound: float, ok: bool | None = None) -> tuple:
    ok = (value <= bound) if ok is None else ok
    return (f"{'PASS' if ok else 'FAIL'}  {label}: {value:.4g} (bound {bound:g})", ok)


# ----------------------------------------------------------------------------
# criteria


def criterion_1():
    """Inverse potential: OtA <= 0.12, Gauss-Newton <= 0.08, OtA with Adam 5e3 <= 0.20."""
    _, gn = run("ex1", "reference")
    _, ota = run("ex1", "ota", seed=1)
    _, ci = run("ex1", "ota", seed=1, **{"train.adam_iterations": 5000})
    return [
        line("1 ex1 OtA relative error of u", ota.rows[-1]["rel_err"], 0.12),
        line("1 ex1 Gauss-Newton relative error of u", gn.rows[-1]["rel_err"], 0.08),
        line("1 ex1 OtA (Adam 5e3) relative error of u", ci.rows[-1]["rel_err"], 0.20),
    ]


def criterion_2():
    """Burgers control: z <= 0.3, ||u - z||/||z|| <= 0.02, distance to the projected-gradient control <= 0.05."""
    p, ota = run("ex2", "ota")
    _, ref = run("ex2", "reference")
    u, z = ota.state.u, ota.state.z
    zmax = float(np.max(z.values))
    gap = l2_norm(u - z) / l2_norm(z)
    diff = l2_norm(u - ref.state.u) / l2_norm(ref.state.u)
    return [
        line("2 ex2 max z (upper bound 0.3 held exactly)", zmax, 0.3, zmax <= 0.3),
        line("2 ex2 ||u - z|| / ||z|| at K=20", gap, 0.02),
        line("2 ex2 OtA vs projected-gradient control", diff, 0.05),
    ]


def criterion_3():
    """Source identification: relative error <= 0.25 at K=350, <= 0.40 at K=100."""
    _, rep = run("ex3", "ota", seed=1)
    # the K=100 run is the first 100 rows of the same deterministic run
    at100 = rep.rows[99]["rel_err"] if len(rep.rows) >= 100 else float("inf")
    return [
        line("3 ex3 relative error of u at K=350", rep.rows[-1]["rel_err"] if rep.rows else float("inf"), 0.25),
        line("3 ex3 relative error of u at K=100", at100, 0.40),
    ]


def criterion_4():
    """Sparse parabolic control: relative error <= 0.05 and max |u| <= 0.02 for t > 0.83."""
    p, rep = run("ex4", "ota")
    m = p.metrics(rep.state.u, rep.state.y, rep.state.z)
    return [
        line("4 ex4 relative error of u", m["rel_err_u"], 0.05),
        line("4 ex4 max |u| on the lattice for t > 0.83", m["late_max_abs_u"], 0.02),
    ]


def _ex4_exact_residual(seed=0, n=500):
    p = make_problem("ex4")
    x = np.random.default_rng(seed).uniform(0, 1, (n, 3))
    a = p.amp
    x1, x2, t = x[:, 0], x[:, 1], x[:, 2]
    s3, c3 = np.sin(3 * np.pi * x1), np.cos(3 * np.pi * x1)
    s1, c1 = np.sin(np.pi * x1), np.cos(np.pi * x1)
    s2, c2 = np.sin(np.pi * x2), np.cos(np.pi * x2)
    y = a * t * s3 * s2
    q = a * (t - 1)
    pv = q * s1 * s2
    jets = {
        "y": as_jet(y, np.stack([a * t * 3 * np.pi * c3 * s2, a * t * np.pi * s3 * c2, a * s3 * s2], 1),
                    np.stack([-9 * np.pi**2 * y, -np.pi**2 * y], 1), (0, 1)),
        "p": as_jet(pv, np.stack([q * np.pi * c1 * s2, q * np.pi * s1 * c2, a * s1 * s2], 1),
                    np.stack([-np.pi**2 * pv, -np.pi**2 * pv], 1), (0, 1)),
    }
    # u from the exact adjoint through the OtA elimination with z = u_bar, lam = lam_bar
    u = p.u_from_adjoint(pv, p.u_bar(x), p.lam_bar(x))
    r = p.pde_residual(jets, u, p.point_data("interior", x))
    return max(float(np.max(np.abs(r["state"]))), float(np.max(np.abs(r["adjoint"]))),
               float(np.max(np.abs(u - p.u_bar(x)))))


def _bit_identical_rerun() -> bool:
    args = [sys.executable, "-m", "pdeopt.cli", "run", "--problem", "ex2", "--method", "ota", "--seed", "5", "--quiet",
            "--set", "admm.iterations=3", "--set", "net.width=8", "--set", "train.adam_iterations=50",
            "--set", "train.lbfgs_iterations=20"]
    env = {**os.environ, "PDEOPT_THREADS": "1"}
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for name in ("a", "b"):
            subprocess.run([*args, "--out", str(Path(tmp) / name)], env=env, check=True, capture_output=True)
            outs.append([(Path(tmp) / name / f).read_bytes() for f in ("trace.csv", "u.csv", "y.csv", "z.csv", "lam.csv")])
        return outs[0] == outs[1]


def criterion_5():
    """Property suites."""
    out = []
    for suite in ("jets", "prox", "optim", "fem"):
        rows = verify.run_suite(suite, 0)
        bad = [c.name for c in rows if not c.ok]
        out.append((f"{'PASS' if not bad else 'FAIL'}  5 {suite} suite: {len(rows) - len(bad)}/{len(rows)} checks"
                    + (f" (failed: {'; '.join(bad)})" if bad else ""), not bad))
    out.append(line("5 ex4 exact fields, max optimality-system residual", _ex4_exact_residual(), 1e-10))
    same = _bit_identical_rerun()
    out.append((f"{'PASS' if same else 'FAIL'}  5 bit-identical rerun under a fixed seed and PDEOPT_THREADS=1", same))
    return out


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5]


# ----------------------------------------------------------------------------
# pytest entry points


def _check(fn, capsys):
    rows = fn()
    with capsys.disabled():
        print()
        for text, _ in rows:
            print(text)
    failed = [text for text, ok in rows if not ok]
    assert not failed, "\n".join(failed)


@pytest.mark.parametrize("fn", CRITERIA, ids=[f"criterion_{i + 1}" for i in range(len(CRITERIA))])
def test_acceptance(fn, capsys):
    _check(fn, capsys)


if __name__ == "__main__":
    total = failed = 0
    for fn in CRITERIA:
        for text, ok in fn():
            print(text, flush=True)
            total += 1
            failed += not ok
    print(f"{total - failed} passed, {failed} failed")
    sys.exit(1 if failed else 0)
