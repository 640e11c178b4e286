"""Quick property suites behind ``pdeopt verify``.

Each suite returns a list of ``Check`` rows; the command exits non-zero if
any row failed.  Inputs are drawn from fixed seeds so a failure reproduces.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nnet, optim, prox, refsolve
from .field import Lattice, ScalarField

__all__ = ["Check", "SUITES", "run_suite"]


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


def _rel(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


# ----------------------------------------------------------------------------
# jets


def jets_suite(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for d, ans in ((1, nnet.IDENTITY), (1, nnet.interval_bubble()), (2, nnet.scaled(0.5)), (3, nnet.IDENTITY)):
        net = nnet.init((d, 6, 5, 1), rng)
        x = rng.uniform(0.1, 0.9, (7, d))
        jet = nnet.eval_jets(net, ans, x, 2)
        e = 1e-4
        g_fd = np.empty((x.shape[0], d))
        h_fd = np.empty((x.shape[0], d))
        f0 = nnet.eval_jets(net, ans, x, 0).value
        for a in range(d):
            step = np.zeros(d)
            step[a] = e
            fp = nnet.eval_jets(net, ans, x + step, 0).value
            fm = nnet.eval_jets(net, ans, x - step, 0).value
            g_fd[:, a] = (fp - fm) / (2 * e)
            h_fd[:, a] = (fp - 2 * f0 + fm) / e**2
        eg, eh = _rel(jet.grad, g_fd), _rel(jet.diag2, h_fd, 1e-2)
        tag = f"{ans.name}, d={d}"
        out.append(Check(f"first derivatives ({tag})", eg <= 1e-5, f"rel err {eg:.2e}"))
        out.append(Check(f"second derivatives ({tag})", eh <= 1e-5 or _abs_ok(jet.diag2, h_fd), f"rel err {eh:.2e}"))

    # parameter gradient through a loss holding second derivatives
    net = nnet.init((2, 6, 6, 1), rng)
    x = rng.uniform(0, 1, (9, 2))

    def loss_fn(jets):
        j = jets[0]
        r = j.diag2[:, 0] + j.diag2[:, 1] - j.value * j.grad[:, 0]
        n = r.size
        dv = -2 * r * j.grad[:, 0] / n
        dg = np.zeros_like(j.grad)
        dg[:, 0] = -2 * r * j.value / n
        dh = np.stack([2 * r / n, 2 * r / n], axis=1)
        return float(np.mean(r**2)), [(dv, dg, dh)]

    req = [nnet.JetRequest(0, nnet.IDENTITY, x, 2)]
    _, grads = nnet.loss_grad([net], req, loss_fn)
    theta = net.to_vector()
    direction = rng.standard_normal(theta.size)
    e = 1e-6

    def at(t):
        return nnet.loss_grad([nnet.MlpParams.from_vector(net.widths, t)], req, loss_fn)[0]

    fd = (at(theta + e * direction) - at(theta - e * direction)) / (2 * e)
    an = float(grads[0] @ direction)
    err = abs(fd - an) / max(abs(fd), 1e-12)
    out.append(Check("parameter gradient of a second-derivative loss", err <= 1e-4, f"rel err {err:.2e}"))
    return out


def _abs_ok(a, b, tol=1e-4):
    return float(np.max(np.abs(a - b))) <= tol


# ----------------------------------------------------------------------------
# prox


def prox_suite(seed: int = 0, instances: int = 1000) -> list:
    rng = np.random.default_rng(seed)
    grid = np.linspace(-6, 6, 24001)
    h = grid[1] - grid[0]
    worst = {"shrink": 0.0, "box": 0.0, "sparse-box": 0.0}
    for _ in range(instances):
        v = rng.uniform(-5, 5)
        zeta = rng.uniform(0, 2)
        beta = rng.uniform(0.1, 2)
        a = rng.uniform(-4, 0)
        b = rng.uniform(0, 4)
        quad = 0.5 * beta * (grid - v) ** 2
        cases = {
            "shrink": (prox.shrink(np.array([v]), zeta / beta)[0], zeta * np.abs(grid) + quad),
            "box": (prox.project_box(np.array([v]), a, b)[0],
                    np.where((grid >= a) & (grid <= b), quad, np.inf)),
            "sparse-box": (prox.prox_sparse_box(np.array([v]), zeta / beta, a, b)[0],
                           np.where((grid >= a) & (grid <= b), zeta * np.abs(grid) + quad, np.inf)),
        }
        for k, (val, obj) in cases.items():
            worst[k] = max(worst[k], abs(val - grid[np.argmin(obj)]))
    out = [Check(f"{k} vs grid argmin ({instances} instances)", w <= h, f"max gap {w:.1e}, grid step {h:.1e}")
           for k, w in worst.items()]

    lat = Lattice((0.0,), (1.0,), (33,))
    const = ScalarField(lat, np.full(33, 0.7))
    z = prox.prox_tv(const, 0.3, prox.TvConfig(), 1.0)
    out.append(Check("TV prox keeps constants", _abs_ok(z.values, const.values, 1e-10)))
    v = ScalarField(lat, np.where(lat.axes()[0] < 0.5, 1.0, 0.0) + 0.1 * rng.standard_normal(33))
    z = prox.prox_tv(v, 0.0, prox.TvConfig(), 1.0)
    out.append(Check("TV prox with zero weight is the identity", _abs_ok(z.values, v.values, 1e-12)))

    h = lat.spacing[0]

    def tv_obj(f):  # periodic TV, lattice-weighted quadratic: the functional the prox minimizes
        return 0.05 * prox.total_variation(f, (h,), periodic=True) + 0.5 * h * np.sum((f - v.values) ** 2)

    z = prox.prox_tv(v, 0.05, prox.TvConfig(zeta=1.0, iterations=500), 1.0)
    mean = np.full(33, v.values.mean())
    ok = tv_obj(z.values) <= min(tv_obj(v.values), tv_obj(mean))
    out.append(Check("TV prox lowers its objective below v and mean(v)", ok, f"{tv_obj(z.values):.6g}"))
    return out


# ----------------------------------------------------------------------------
# optim


def _rosenbrock(x):
    f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
    g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
    return f, g


def wolfe_ok(rows, c1, c2, tol=1e-12) -> bool:
    for alpha, f0, f1, s0, s1 in rows:
        if f1 > f0 + c1 * alpha * s0 + tol * max(1.0, abs(f0)):
            return False
        if abs(s1) > c2 * abs(s0) + tol:
            return False
    return True


def optim_suite(seed: int = 0) -> list:
    out = []
    cfg = optim.OptConfig(lbfgs_iterations=200, gtol=1e-10)
    r = optim.lbfgs_run(_rosenbrock, np.array([-1.2, 1.0]), cfg)
    err = float(np.linalg.norm(r.theta - 1.0))
    out.append(Check("L-BFGS solves Rosenbrock", err < 1e-6, f"|x-x*| {err:.1e} in {len(r.trace)} steps"))
    out.append(Check("every accepted step satisfies strong Wolfe", wolfe_ok(r.wolfe, cfg.c1, cfg.c2),
                     f"{len(r.wolfe)} steps"))

    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((10, 10))
    A = Q @ Q.T + 10 * np.eye(10)
    xs = rng.standard_normal(10)

    def quad(x):
        d = x - xs
        return 0.5 * d @ A @ d, A @ d

    cfg = optim.OptConfig(lbfgs_iterations=100, c2=0.01, gtol=1e-10)
    r = optim.lbfgs_run(quad, np.zeros(10), cfg)
    out.append(Check("L-BFGS on a 10-D quadratic", np.linalg.norm(quad(r.theta)[1]) <= 1e-10 and len(r.trace) <= 15,
                     f"{len(r.trace)} steps"))
    out.append(Check("quadratic steps satisfy strong Wolfe", wolfe_ok(r.wolfe, cfg.c1, cfg.c2)))

    cfg = optim.OptConfig(adam_iterations=3000, adam_lr=1e-2)
    r = optim.adam_run(quad, np.zeros(10), cfg)
    out.append(Check("Adam decreases a quadratic", r.trace[-1][1] < 1e-3 * r.trace[0][1],
                     f"{r.trace[0][1]:.3g} -> {r.trace[-1][1]:.3g}"))
    return out


# ----------------------------------------------------------------------------
# fem


def fem_suite(seed: int = 0) -> list:
    nu = 0.1
    errs_e, errs_b = [], []
    for n in (20, 40, 80):
        mesh = refsolve.Fem1dMesh(0.0, 1.0, n)
        x = mesh.nodes
        y = np.sin(np.pi * x)
        u = 1.0 + x
        f = nu * np.pi**2 * y + u * y
        errs_e.append(np.max(np.abs(refsolve.fem_elliptic_1d(mesh, nu, u, f) - y)))
        src = nu * np.pi**2 * y + y * np.pi * np.cos(np.pi * x)
        errs_b.append(np.max(np.abs(refsolve.fem_burgers_1d(mesh, nu, src) - y)))
    out = []
    for name, e in (("elliptic", errs_e), ("Burgers", errs_b)):
        ratios = [e[i] / e[i + 1] for i in range(len(e) - 1)]
        ok = all(3.6 <= r <= 4.4 for r in ratios)
        out.append(Check(f"{name} FEM second-order convergence", ok, "ratios " + ", ".join(f"{r:.3f}" for r in ratios)))
    return out


SUITES = {"jets": jets_suite, "prox": prox_suite, "optim": optim_suite, "fem": fem_suite}


def run_suite(name: str, seed: int = 0) -> list:
    if name == "all":
        rows = []
        for key, fn in SUITES.items():
            rows += [Check(f"{key}: {c.name}", c.ok, c.detail) for c in fn(seed)]
        return rows
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](seed)
