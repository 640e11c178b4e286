"""Outer ADMM loop.

Each iteration solves the smooth u-subproblem, applies the prox of the
nonsmooth term to ``u - lam/beta`` and updates the multiplier:

    z   <- prox(u - lam / beta)
    lam <- lam - beta (u - z)

:func:`admm_iterate` is the bare loop over user-supplied u-steps and prox
maps; :func:`admm_run` plugs in PINN training and the problem's prox, and
:func:`reference_run` the finite-element baselines.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import nnet, optim, pinnsolve, refsolve
from .field import ScalarField, SeededRng, format_float, l2_norm
from .prox import ProxDivergenceError

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "ConvergenceReport",
    "multiplier_update",
    "admm_iterate",
    "admm_run",
    "admm_config",
    "train_config",
    "reference_run",
]


@dataclass(frozen=True)
class AdmmConfig:
    beta: float
    iterations: int
    method: str = "ota"
    z0: ScalarField | None = None
    lam0: ScalarField | None = None
    warm_start: bool = True
    early_stop_tol: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.iterations < 1:
            raise ValueError("at least one outer iteration is required")
        if self.method not in ("ota", "ato"):
            raise ValueError(f"unknown inner solver {self.method!r}")


@dataclass
class AdmmState:
    nets: dict
    z: ScalarField
    lam: ScalarField
    k: int = 0
    u: ScalarField | None = None
    y: ScalarField | None = None


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    wall_time: float = 0.0
    state: AdmmState | None = None
    failed: bool = False
    message: str = ""
    training: list = field(default_factory=list)  # per outer iteration: (steps, final loss, status)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "primal_residual", "objective", "rel_err"])
        for r in self.rows:
            w.writerow([r["k"], format_float(r["primal_residual"]), format_float(r["objective"]),
                        format_float(r["rel_err"])])
        return buf.getvalue()

    def summary(self) -> dict:
        last = self.rows[-1] if self.rows else {}
        return {
            "iterations": len(self.rows),
            "failed": self.failed,
            "message": self.message,
            "wall_time_s": self.wall_time,
            "final": last,
        }


def multiplier_update(lam, u, z, beta: float):
    """``lam - beta (u - z)``, pointwise."""
    if isinstance(lam, ScalarField):
        for f in (u, z):
            if not isinstance(f, ScalarField) or f.lattice != lam.lattice:
                raise ValueError("multiplier update needs fields on one lattice")
        return lam.with_values(lam.values - beta * (u.values - z.values))
    return np.asarray(lam) - beta * (np.asarray(u) - np.asarray(z))


def admm_iterate(u_step, prox, z0: ScalarField, lam0: ScalarField, beta: float, iterations: int,
                 objective=None, rel_err=None, early_stop_tol: float = 0.0,
                 report: ConvergenceReport | None = None) -> ConvergenceReport:
    """Run the outer loop.

    ``u_step(k, z, lam) -> (u, y)`` returns lattice fields (``y`` may be None);
    ``prox(v) -> z``.  Divergence inside either step ends the loop with
    ``failed = True`` and the rows recorded so far.
    """
    rep = report or ConvergenceReport()
    t0 = time.perf_counter()
    z, lam = z0, lam0
    u = y = None
    for k in range(iterations):
        try:
            u, y = u_step(k, z, lam)
            z = prox(u - lam / beta)
        except (nnet.TrainingDivergenceError, ProxDivergenceError, refsolve.SingularSystemError,
                refsolve.NewtonStagnationError, FloatingPointError) as exc:
            rep.failed = True
            rep.message = f"iteration {k + 1}: {exc}"
            break
        lam = multiplier_update(lam, u, z, beta)
        res = l2_norm(u - z)
        rep.rows.append({
            "k": k + 1,
            "primal_residual": res,
            "objective": float(objective(y, u, z)) if objective else float("nan"),
            "rel_err": float(rel_err(u)) if rel_err else float("nan"),
        })
        if early_stop_tol > 0 and res < early_stop_tol:
            break
    rep.wall_time += time.perf_counter() - t0
    if rep.state is None:
        rep.state = AdmmState({}, z, lam, len(rep.rows), u, y)
    else:
        rep.state.z, rep.state.lam, rep.state.k, rep.state.u, rep.state.y = z, lam, len(rep.rows), u, y
    return rep


def _zero_or(field_, lattice):
    if field_ is None:
        return ScalarField.zeros(lattice)
    if field_.lattice != lattice:
        raise ValueError("initial z / lam must live on the problem lattice")
    return field_


def admm_run(problem, cfg: AdmmConfig, train: pinnsolve.TrainConfig, rng: SeededRng,
             on_iteration=None) -> ConvergenceReport:
    """ADMM with PINN u-steps (AtO or OtA per ``cfg.method``)."""
    if cfg.method not in problem.methods:
        raise pinnsolve.UnsupportedSolverError(f"{problem.id} has no {cfg.method!r} formulation enabled")
    z0 = _zero_or(cfg.z0, problem.lattice)
    lam0 = _zero_or(cfg.lam0, problem.lattice)
    nets = pinnsolve.init_networks(problem, cfg.method, train.hidden, rng)
    rep = ConvergenceReport()
    rep.state = AdmmState(nets, z0, lam0)

    def u_step(k, z, lam):
        start = rep.state.nets if (cfg.warm_start and k > 0) else \
            pinnsolve.init_networks(problem, cfg.method, train.hidden, rng)
        budget_train = train if cfg.warm_start else pinnsolve.TrainConfig(
            train.opt, train.weights, train.policy, train.hidden, None)
        res = pinnsolve.solve_subproblem(problem, start, z, lam, budget_train, cfg.method, rng, k)
        rep.state.nets = res.nets
        final = res.trace[-1][1] if res.trace else float("nan")
        rep.training.append({"k": k + 1, "steps": len(res.trace), "final_loss": final, "status": res.status})
        if on_iteration is not None:
            on_iteration(k, res)
        return res.u, res.y

    return admm_iterate(u_step, problem.prox, z0, lam0, cfg.beta, cfg.iterations,
                        problem.objective_value, problem.relative_error, cfg.early_stop_tol, rep)


# ----------------------------------------------------------------------------
# configuration from preset settings


def admm_config(problem, method: str = "ota") -> AdmmConfig:
    s = problem.settings
    return AdmmConfig(s["admm.beta"], s["admm.iterations"], method, warm_start=s["admm.warm_start"],
                      early_stop_tol=s["admm.early_stop_tol"])


def train_config(problem) -> pinnsolve.TrainConfig:
    s = problem.settings
    common = dict(adam_lr=s["train.adam_lr"], adam_beta1=s["train.adam_beta1"], adam_beta2=s["train.adam_beta2"],
                  adam_eps=s["train.adam_eps"], lbfgs_memory=s["train.lbfgs_memory"], c1=s["train.c1"],
                  c2=s["train.c2"], gtol=s["train.gtol"])
    first = optim.OptConfig(adam_iterations=s["train.adam_iterations"],
                            lbfgs_iterations=s["train.lbfgs_iterations"], **common)
    warm = None
    wa, wl = s["train.warm_adam_iterations"], s["train.warm_lbfgs_iterations"]
    if wa >= 0 or wl >= 0:
        warm = optim.OptConfig(adam_iterations=wa if wa >= 0 else first.adam_iterations,
                               lbfgs_iterations=wl if wl >= 0 else first.lbfgs_iterations, **common)
    weights = {k.split(".", 1)[1]: v for k, v in s.items()
               if k.startswith("weights.") and k.split(".", 1)[1] in pinnsolve.LossWeights.__dataclass_fields__}
    hidden = (s["net.width"],) * s["net.hidden_layers"]
    return pinnsolve.TrainConfig(first, pinnsolve.LossWeights(**weights), s["samples.policy"], hidden, warm)


# ----------------------------------------------------------------------------
# finite-element baselines


def admm_gauss_newton(problem, cfg: AdmmConfig | None = None) -> ConvergenceReport:
    """ADMM for the potential problem with Gauss-Newton u-steps on the FEM mesh."""
    cfg = cfg or admm_config(problem)
    s = problem.settings
    mesh = problem.mesh
    z0 = _zero_or(cfg.z0, problem.lattice)
    lam0 = _zero_or(cfg.lam0, problem.lattice)
    prev = {"u": None}

    def u_step(k, z, lam):
        r = refsolve.gauss_newton_ex1(mesh, s["problem.nu"], problem.f_nodes, problem.y_obs.flat(), z.flat(),
                                      lam.flat(), cfg.beta, s["reference.gn_iterations"], u0=prev["u"])
        prev["u"] = r.u
        y = refsolve.fem_elliptic_1d(mesh, s["problem.nu"], r.u, problem.f_nodes)
        return ScalarField(problem.lattice, r.u), ScalarField(problem.lattice, y)

    return admm_iterate(u_step, problem.prox, z0, lam0, cfg.beta, cfg.iterations,
                        problem.objective_value, problem.relative_error, cfg.early_stop_tol)


def projected_gradient_run(problem) -> ConvergenceReport:
    """Projected-gradient solution of the full Burgers control problem (one row per iteration)."""
    s = problem.settings
    mesh = problem.mesh
    t0 = time.perf_counter()
    r = refsolve.projected_gradient_ex2(mesh, s["problem.nu"], s["problem.alpha"], s["problem.y_d"],
                                        s["problem.lower"], s["problem.upper"], s["reference.pg_iterations"])
    rep = ConvergenceReport()
    for i, val in enumerate(r.history[1:], start=1):
        rep.rows.append({"k": i, "primal_residual": 0.0, "objective": val, "rel_err": float("nan")})
    u = ScalarField(problem.lattice, r.u)
    y = ScalarField(problem.lattice, refsolve.fem_burgers_1d(mesh, s["problem.nu"], r.u))
    rep.state = AdmmState({}, u, ScalarField.zeros(problem.lattice), len(rep.rows), u, y)
    rep.message = r.flag
    rep.wall_time = time.perf_counter() - t0
    return rep


def reference_run(problem) -> ConvergenceReport:
    if problem.id == "ex1":
        return admm_gauss_newton(problem)
    if problem.id == "ex2":
        return projected_gradient_run(problem)
    raise pinnsolve.UnsupportedSolverError(f"no finite-element reference solver for {problem.id}")
