"""Full-batch Adam and L-BFGS for flat parameter vectors.

Both trainers take an oracle ``f(theta) -> (loss, grad)``.  L-BFGS builds its
direction with the two-loop recursion and accepts steps through SciPy's
strong-Wolfe line search (bracketing plus zoom); each accepted step is
re-checked against both Wolfe inequalities before it is taken.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search

from .field import format_float
from .nnet import TrainingDivergenceError

__all__ = ["OptConfig", "OptResult", "adam_run", "lbfgs_run", "loss_trace_csv", "write_loss_trace"]


@dataclass(frozen=True)
class OptConfig:
    adam_iterations: int = 0
    adam_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lbfgs_iterations: int = 0
    lbfgs_memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    gtol: float = 1e-10
    max_bracket: int = 25

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("Wolfe constants need 0 < c1 < c2 < 1")
        if not self.adam_lr > 0:
            raise ValueError("learning rate must be positive")
        if self.lbfgs_memory < 1:
            raise ValueError("L-BFGS memory must be at least 1")
        if self.adam_iterations < 0 or self.lbfgs_iterations < 0:
            raise ValueError("iteration counts must be non-negative")


@dataclass
class OptResult:
    theta: np.ndarray
    trace: list = field(default_factory=list)  # (step, loss, grad_norm)
    status: str = "ok"
    evaluations: int = 0
    wolfe: list = field(default_factory=list)  # (alpha, f0, f1, slope0, slope1) per accepted step
    fallback_steps: int = 0

    @property
    def iterations(self) -> int:
        return len(self.trace)


def _check(loss, grad, where):
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise TrainingDivergenceError(f"non-finite loss or gradient {where}")


def adam_run(oracle, theta0: np.ndarray, cfg: OptConfig, step_offset: int = 0) -> OptResult:
    """Bias-corrected Adam for ``cfg.adam_iterations`` full-batch steps."""
    theta = np.array(theta0, float)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.adam_lr
    res = OptResult(theta)
    for t in range(1, cfg.adam_iterations + 1):
        try:
            loss, g = oracle(theta)
            _check(loss, g, f"at Adam step {t}")
        except TrainingDivergenceError as exc:
            exc.trace = res.trace
            raise
        res.evaluations += 1
        res.trace.append((step_offset + t - 1, float(loss), float(np.linalg.norm(g))))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
    res.theta = theta
    return res


class _Cached:
    """Wrap an oracle so SciPy's separate f / fprime calls cost one evaluation."""

    def __init__(self, oracle):
        self.oracle = oracle
        self.x = None
        self.f = None
        self.g = None
        self.calls = 0

    def eval(self, x):
        if self.x is None or not np.array_equal(x, self.x):
            f, g = self.oracle(x)
            self.calls += 1
            if not np.isfinite(f):
                # let the line search treat the probe as a failed (huge) value
                f = np.inf
            self.x, self.f, self.g = np.array(x, copy=True), float(f), np.asarray(g, float)
        return self.f, self.g

    def fun(self, x):
        return self.eval(x)[0]

    def grad(self, x):
        return self.eval(x)[1]


def _two_loop(g, S, Y, rho):
    q = g.copy()
    alphas = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
        a = r * (s @ q)
        alphas.append(a)
        q -= a * y
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y, r), a in zip(zip(S, Y, rho), reversed(alphas)):
        b = r * (y @ q)
        q += (a - b) * s
    return -q


def _backtrack(c: _Cached, x, f0, g0, c1, halvings=50):
    d = -g0
    gn = np.linalg.norm(g0)
    alpha = min(1.0, 1.0 / gn) if gn > 0 else 0.0
    slope = g0 @ d
    for _ in range(halvings):
        f1 = c.fun(x + alpha * d)
        if np.isfinite(f1) and f1 <= f0 + c1 * alpha * slope:
            return alpha, d
        alpha *= 0.5
    return None, d


def lbfgs_run(oracle, theta0: np.ndarray, cfg: OptConfig, step_offset: int = 0) -> OptResult:
    """L-BFGS with memory ``cfg.lbfgs_memory`` and strong-Wolfe steps.

    Stops at ``||grad|| <= cfg.gtol`` or after ``cfg.lbfgs_iterations``
    iterations.  A failed line search falls back to one steepest-descent step
    with Armijo backtracking; if that fails as well the current iterate is
    returned with ``status = "line_search_failed"``.
    """
    c = _Cached(oracle)
    x = np.array(theta0, float)
    res = OptResult(x)
    if cfg.lbfgs_iterations == 0:
        return res
    f, g = c.eval(x)
    _check(f, g, "at L-BFGS start")
    S, Y, rho = [], [], []
    for it in range(cfg.lbfgs_iterations):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.gtol:
            res.status = "converged"
            break
        res.trace.append((step_offset + it, f, gnorm))
        if S:
            d = _two_loop(g, S, Y, rho)
        else:
            d = -g / max(1.0, gnorm)
        slope0 = float(g @ d)
        if slope0 >= 0:
            S, Y, rho = [], [], []
            d = -g / max(1.0, gnorm)
            slope0 = float(g @ d)
        with warnings.catch_warnings():
            # failed searches warn (a RuntimeWarning subclass); failure is handled below
            warnings.simplefilter("ignore", RuntimeWarning)
            alpha, *_ = line_search(c.fun, c.grad, x, d, gfk=g, old_fval=f, c1=cfg.c1, c2=cfg.c2,
                                    maxiter=cfg.max_bracket)
        ok = False
        if alpha is not None and alpha > 0:
            x1 = x + alpha * d
            f1, g1 = c.eval(x1)
            slope1 = float(g1 @ d)
            ok = (np.isfinite(f1) and np.all(np.isfinite(g1))
                  and f1 <= f + cfg.c1 * alpha * slope0
                  and abs(slope1) <= cfg.c2 * abs(slope0))
        if ok:
            res.wolfe.append((float(alpha), f, float(f1), slope0, slope1))
        else:
            alpha, d = _backtrack(c, x, f, g, cfg.c1)
            if alpha is None:
                res.status = "line_search_failed"
                break
            x1 = x + alpha * d
            f1, g1 = c.eval(x1)
            res.fallback_steps += 1
            S, Y, rho = [], [], []
        s, y = x1 - x, g1 - g
        sy = float(s @ y)
        if sy > 0:
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
            if len(S) > cfg.lbfgs_memory:
                S.pop(0)
                Y.pop(0)
                rho.pop(0)
        x, f, g = x1, float(f1), g1
    else:
        if np.linalg.norm(g) <= cfg.gtol:
            res.status = "converged"
    res.theta = x
    res.evaluations = c.calls
    return res


def loss_trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss", "grad_norm"])
    for step, loss, gn in trace:
        w.writerow([int(step), format_float(loss), format_float(gn)])
    return buf.getvalue()


def write_loss_trace(trace, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, loss_trace_csv(trace))
