"""Box-constrained optimal control of the stationary Burgers equation on (0, 1).

``min 1/2 ||y - y_d||^2 + alpha/2 ||u||^2`` subject to
``-nu y'' + y y' = chi_omega u``, ``y(0) = y(1) = 0`` and ``a <= u <= b``.
The OtA formulation uses the reduced optimality system: u is eliminated
through ``u = (-p + lam + beta z) / (alpha + beta)``.
"""
from __future__ import annotations

import numpy as np

from .. import nnet, prox as proxmod
from ..field import Lattice, ScalarField
from ..refsolve import Fem1dMesh
from .base import ProblemSpec, mean_sq


class BurgersControl(ProblemSpec):
    id = "ex2"
    input_dim = 1
    ato_default = True
    DEFAULTS = {
        "problem.nu": 1.0 / 12.0,
        "problem.alpha": 0.1,
        "problem.lower": -np.inf,
        "problem.upper": 0.3,
        "problem.y_d": 0.3,
        "problem.omega_lower": 0.0,
        "problem.omega_upper": 1.0,
        "problem.elements": 100,
        "admm.beta": 0.1,
        "admm.iterations": 20,
        "net.hidden_layers": 4,
        "net.width": 50,
        "train.adam_iterations": 5000,
        "train.adam_lr": 1e-3,
        "train.lbfgs_iterations": 1000,
        "samples.policy": "fixed",
        "weights.w_o": 1.0,
        "weights.w_e": 1.0,
        "weights.w_y": 1.0,
        "weights.w_p": 1.0,
        "reference.pg_iterations": 500,
    }
    # about 3 minutes on one core
    DESK = {
        "train.lbfgs_iterations": 200,
        "train.warm_adam_iterations": 500,
        "train.warm_lbfgs_iterations": 100,
    }

    def _build(self):
        s = self.settings
        self.mesh = Fem1dMesh(0.0, 1.0, s["problem.elements"])
        self.lattice = self.mesh.lattice
        self.omega = self.chi(self.mesh.nodes)

    def chi(self, x):
        x = np.asarray(x, float).reshape(-1)
        return ((x >= self["problem.omega_lower"]) & (x <= self["problem.omega_upper"])).astype(float)

    def set_plans(self):
        from ..pinnsolve import SetPlan

        return {"interior": SetPlan("interior", self.settings["problem.elements"] + 1, "grid")}

    def point_data(self, name, x):
        return {"chi": self.chi(x[:, 0])}

    def nets(self, method):
        bubble = nnet.interval_bubble()
        if method == "ota":
            return {"y": bubble, "p": bubble}
        return {"u": nnet.IDENTITY, "y": bubble}

    def requests(self, method):
        if method == "ota":
            return [("y", "interior", 2), ("p", "interior", 2)]
        return [("u", "interior", 0), ("y", "interior", 2)]

    def u_from_adjoint(self, p, z, lam, chi):
        return chi * ((lam + self.beta * z) - p) * (1.0 / (self["problem.alpha"] + self.beta))

    def recover_u(self, method, vals, z, lam, x):
        if method == "ota":
            return self.u_from_adjoint(vals["p"], z, lam, self.chi(x[:, 0]))
        return vals["u"] * self.chi(x[:, 0])

    def _state(self, y, u, chi=1.0):
        return -self["problem.nu"] * y.d2(0) + y.value * y.d1(0) - chi * u

    def _adjoint(self, p, y):
        return -self["problem.nu"] * p.d2(0) - y.value * p.d1(0) - (y.value - self["problem.y_d"])

    def pde_residual(self, jets, u, data=None):
        y = jets["y"]
        out = {"state": self._state(y, u)}
        if "p" in jets:
            out["adjoint"] = self._adjoint(jets["p"], y)
        return out

    def loss(self, method, J, ctx, w):
        c = ctx["interior"]
        y = J["y", "interior"]
        if method == "ota":
            p = J["p", "interior"]
            u = self.u_from_adjoint(p.value, c["z"], c["lam"], c["chi"])
            return w.w_y * mean_sq(self._state(y, u)) + w.w_p * mean_sq(self._adjoint(p, y))
        b = self.beta
        u = J["u", "interior"].value * c["chi"]
        aug = u - (c["z"] + c["lam"] / b)
        fit = y.value - self["problem.y_d"]
        obj = (0.5 * fit.square() + (0.5 * self["problem.alpha"]) * u.square() + (0.5 * b) * aug.square()).mean()
        return w.w_o * obj + w.w_e * mean_sq(self._state(y, u))

    def prox(self, v):
        out = proxmod.project_box(v, self["problem.lower"], self["problem.upper"])
        return out * self.omega

    def objective_value(self, y, u, z=None):
        w = self.lattice.weights()
        val = 0.5 * float(np.sum(w * (y.values - self["problem.y_d"]) ** 2))
        val += 0.5 * self["problem.alpha"] * float(np.sum(w * u.values**2))
        c = u if z is None else z
        if np.any(c.values > self["problem.upper"]) or np.any(c.values < self["problem.lower"]):
            return float("inf")
        return val

    def metrics(self, u, y, z):
        out = super().metrics(u, y, z)
        out["z_max"] = float(np.max(z.values))
        return out
