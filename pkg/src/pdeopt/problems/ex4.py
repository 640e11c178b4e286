"""Sparse box-constrained optimal control of the heat equation on (0,1)^2 x (0,T).

``min 1/2 ||y - y_d||^2 + alpha/2 ||u||^2 + rho ||u||_1`` over ``a <= u <= b``
subject to ``y_t - nu Lap y + c0 y = u + f``, ``y = 0`` on the spatial
boundary and ``y(0) = 0``.  The data are manufactured so that

    y_bar = A t sin(3 pi x1) sin(pi x2),   p_bar = A (t - 1) sin(pi x1) sin(pi x2),

with ``A = 5 sqrt(rho)``, are the optimal state and adjoint, and
``u_bar = clip(shrink(-p_bar, rho) / alpha, a, b)`` the optimal control.
Points are ordered ``(x1, x2, t)``.
"""
from __future__ import annotations

import numpy as np

from .. import nnet, prox as proxmod
from ..field import Lattice, ScalarField
from .base import ProblemSpec, mean_sq


class SparseHeatControl(ProblemSpec):
    id = "ex4"
    input_dim = 3
    time_axis = 2
    DEFAULTS = {
        "problem.nu": 1.0,
        "problem.c0": 0.0,
        "problem.alpha": 0.1,
        "problem.rho": 0.8,
        "problem.lower": -1.0,
        "problem.upper": 2.0,
        "problem.T": 1.0,
        "problem.lattice_nodes": 33,
        "admm.beta": 0.1,
        "admm.iterations": 10,
        "net.hidden_layers": 3,
        "net.width": 32,
        "train.adam_iterations": 10000,
        "train.adam_lr": 1e-3,
        "train.lbfgs_iterations": 10,
        "samples.policy": "resample",
        "samples.interior": 4096,
        "samples.boundary": 1024,
        "samples.initial": 256,
        "weights.w_o": 1.0,
        "weights.w_e": 1.0,
        "weights.w_y": 1.0,
        "weights.w_p": 1.0,
        "weights.w_i": 1.0,
        "weights.w_b1": 5.0,
        "weights.w_b2": 5.0,
    }
    # about 30 minutes on one core
    DESK = {
        "train.adam_iterations": 3000,
        "train.warm_adam_iterations": 500,
        "train.warm_lbfgs_iterations": 10,
    }

    def _build(self):
        s = self.settings
        n = s["problem.lattice_nodes"]
        self.lattice = Lattice((0.0, 0.0, 0.0), (1.0, 1.0, s["problem.T"]), (n, n, n), ("x1", "x2", "t"))
        self.amp = 5.0 * np.sqrt(s["problem.rho"])

    # exact solution ---------------------------------------------------------
    def y_bar(self, x):
        x1, x2, t = x[:, 0], x[:, 1], x[:, 2]
        return self.amp * t * np.sin(3 * np.pi * x1) * np.sin(np.pi * x2)

    def p_bar(self, x):
        x1, x2, t = x[:, 0], x[:, 1], x[:, 2]
        return self.amp * (t - 1.0) * np.sin(np.pi * x1) * np.sin(np.pi * x2)

    def u_bar(self, x):
        s = self.settings
        shr = proxmod.shrink(-self.p_bar(x), s["problem.rho"])
        return np.clip(shr / s["problem.alpha"], s["problem.lower"], s["problem.upper"])

    def lam_bar(self, x):
        """Multiplier at the solution: ``lam = p_bar + alpha u_bar``."""
        return self.p_bar(x) + self["problem.alpha"] * self.u_bar(x)

    def t_star(self) -> float:
        """Time after which ``|p_bar| <= rho`` everywhere, hence ``u_bar = 0``."""
        return 1.0 - self["problem.rho"] / self.amp

    def source(self, x):
        s = self.settings
        x1, x2 = x[:, 0], x[:, 1]
        y_t = self.amp * np.sin(3 * np.pi * x1) * np.sin(np.pi * x2)
        lap_y = -10.0 * np.pi**2 * self.y_bar(x)
        return y_t - s["problem.nu"] * lap_y + s["problem.c0"] * self.y_bar(x) - self.u_bar(x)

    def target(self, x):
        s = self.settings
        x1, x2 = x[:, 0], x[:, 1]
        p_t = self.amp * np.sin(np.pi * x1) * np.sin(np.pi * x2)
        lap_p = -2.0 * np.pi**2 * self.p_bar(x)
        # adjoint equation: -p_t - nu Lap p + c0 p = y - y_d
        return self.y_bar(x) - (-p_t - s["problem.nu"] * lap_p + s["problem.c0"] * self.p_bar(x))

    # sampling ---------------------------------------------------------------
    def set_plans(self):
        from ..pinnsolve import SetPlan

        s = self.settings
        T = s["problem.T"]
        return {
            "interior": SetPlan("interior", s["samples.interior"], "random"),
            "boundary": SetPlan("boundary", s["samples.boundary"], "random"),
            "initial": SetPlan("slice", s["samples.initial"], "random", at=0.0),
            "terminal": SetPlan("slice", s["samples.initial"], "random", at=T, share="initial"),
        }

    def point_data(self, name, x):
        if name == "interior":
            return {"f": self.source(x), "y_d": self.target(x)}
        return {}

    def nets(self, method):
        if method == "ota":
            return {"y": nnet.IDENTITY, "p": nnet.IDENTITY}
        return {"u": nnet.IDENTITY, "y": nnet.IDENTITY}

    def requests(self, method):
        inner = ("interior", 2, (0, 1))
        if method == "ota":
            return [("y",) + inner, ("p",) + inner, ("y", "boundary", 0), ("p", "boundary", 0),
                    ("y", "initial", 0), ("p", "terminal", 0)]
        return [("u", "interior", 0), ("y",) + inner, ("y", "boundary", 0), ("y", "initial", 0)]

    def u_from_adjoint(self, p, z, lam):
        return ((lam + self.beta * z) - p) * (1.0 / (self["problem.alpha"] + self.beta))

    def recover_u(self, method, vals, z, lam, x):
        if method == "ota":
            return self.u_from_adjoint(vals["p"], z, lam)
        return vals["u"]

    def _state(self, y, u, f):
        s = self.settings
        return y.d1(2) - s["problem.nu"] * (y.d2(0) + y.d2(1)) + s["problem.c0"] * y.value - u - f

    def _adjoint(self, p, y, y_d):
        s = self.settings
        return (-1.0 * p.d1(2) - s["problem.nu"] * (p.d2(0) + p.d2(1)) + s["problem.c0"] * p.value
                - (y.value - y_d))

    def pde_residual(self, jets, u, data=None):
        data = data or {}
        y = jets["y"]
        out = {"state": self._state(y, u, data.get("f", 0.0))}
        if "p" in jets:
            out["adjoint"] = self._adjoint(jets["p"], y, data.get("y_d", 0.0))
        return out

    def loss(self, method, J, ctx, w):
        ci = ctx["interior"]
        y = J["y", "interior"]
        y_b, y_0 = J["y", "boundary"].value, J["y", "initial"].value
        if method == "ota":
            p = J["p", "interior"]
            u = self.u_from_adjoint(p.value, ci["z"], ci["lam"])
            state = (w.w_i * mean_sq(self._state(y, u, ci["f"])) + w.w_b1 * mean_sq(y_b)
                     + w.w_b2 * mean_sq(y_0))
            adj = (w.w_i * mean_sq(self._adjoint(p, y, ci["y_d"])) + w.w_b1 * mean_sq(J["p", "boundary"].value)
                   + w.w_b2 * mean_sq(J["p", "terminal"].value))
            return w.w_y * state + w.w_p * adj
        b = self.beta
        u = J["u", "interior"].value
        aug = u - (ci["z"] + ci["lam"] / b)
        obj = (0.5 * (y.value - ci["y_d"]).square() + (0.5 * self["problem.alpha"]) * u.square()
               + (0.5 * b) * aug.square()).mean()
        pde = (w.w_i * mean_sq(self._state(y, u, ci["f"])) + w.w_b1 * mean_sq(y_b) + w.w_b2 * mean_sq(y_0))
        return w.w_o * obj + w.w_e * pde

    def prox(self, v):
        s = self.settings
        return proxmod.prox_sparse_box(v, s["problem.rho"] / self.beta, s["problem.lower"], s["problem.upper"])

    def u_true(self):
        return ScalarField(self.lattice, self.u_bar(self.lattice.points()))

    def objective_value(self, y, u, z=None):
        s = self.settings
        w = self.lattice.weights()
        x = self.lattice.points()
        yd = self.target(x).reshape(self.lattice.shape)
        val = 0.5 * float(np.sum(w * (y.values - yd) ** 2)) + 0.5 * s["problem.alpha"] * float(np.sum(w * u.values**2))
        c = (u if z is None else z).values
        if np.any(c < s["problem.lower"]) or np.any(c > s["problem.upper"]):
            return float("inf")
        return val + s["problem.rho"] * float(np.sum(w * np.abs(c)))

    def metrics(self, u, y, z, t_late: float = 0.83):
        out = super().metrics(u, y, z)
        t = self.lattice.axes()[2]
        out["late_max_abs_u"] = float(np.max(np.abs(u.values[:, :, t > t_late])))
        out["late_max_abs_z"] = float(np.max(np.abs(z.values[:, :, t > t_late])))
        return out
