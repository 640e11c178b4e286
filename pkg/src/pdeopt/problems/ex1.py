"""Inverse potential problem on (0, 1).

Identify a piecewise-constant potential u in ``-nu y'' + u y = f``,
``y(0) = y(1) = 0``, from noisy observations of y on the whole interval,
with TV regularisation.
"""
from __future__ import annotations

import numpy as np

from .. import nnet, prox as proxmod
from ..field import Lattice, ScalarField, SeededRng, add_noise
from ..refsolve import Fem1dMesh, fem_elliptic_1d
from .base import ProblemSpec, mean_sq


def u_true_fn(x):
    x = np.asarray(x, float).reshape(-1)
    return np.where((x >= 0.25) & (x <= 0.75), 1.0, 0.2)


class InversePotential(ProblemSpec):
    id = "ex1"
    input_dim = 1
    ato_default = True
    DEFAULTS = {
        "problem.nu": 5e-3,
        "problem.gamma": 8e-3,
        "problem.delta": 0.05,
        "problem.elements": 100,
        "admm.beta": 0.1,
        "admm.iterations": 20,
        "prox.zeta": 0.5,
        "prox.iterations": 80,
        "prox.boundary": "periodic",
        "net.hidden_layers": 4,
        "net.width": 50,
        "train.adam_iterations": 20000,
        "train.adam_lr": 1e-4,
        "train.lbfgs_iterations": 1000,
        "samples.policy": "fixed",
        "weights.w_o": 1.0,
        "weights.w_e": 1.0,
        "weights.w_u": 1.0,
        "weights.w_y": 1.0,
        "weights.w_p": 1.0,
        "reference.gn_iterations": 20,
    }
    # about 8 minutes on one core
    DESK = {
        "train.warm_adam_iterations": 2000,
        "train.warm_lbfgs_iterations": 200,
    }

    def _build(self):
        s = self.settings
        self.mesh = Fem1dMesh(0.0, 1.0, s["problem.elements"])
        self.lattice = self.mesh.lattice
        x = self.mesh.nodes
        self.f_nodes = np.sin(2 * np.pi * x)
        self.y_true = ScalarField(self.lattice, fem_elliptic_1d(self.mesh, s["problem.nu"], u_true_fn(x), self.f_nodes))
        self.y_obs = add_noise(self.y_true, s["problem.delta"], SeededRng(s["data.noise_seed"]))

    def set_plans(self):
        from ..pinnsolve import SetPlan

        return {"interior": SetPlan("interior", self.settings["problem.elements"] + 1, "grid")}

    def point_data(self, name, x):
        from ..field import interp_many

        return {"f": np.sin(2 * np.pi * x[:, 0]), "y_obs": interp_many(self.y_obs, x)}

    def nets(self, method):
        bubble = nnet.interval_bubble()
        if method == "ota":
            return {"u": nnet.IDENTITY, "y": bubble, "p": bubble}
        return {"u": nnet.IDENTITY, "y": bubble}

    def requests(self, method):
        if method == "ota":
            return [("u", "interior", 0), ("y", "interior", 2), ("p", "interior", 2)]
        return [("u", "interior", 0), ("y", "interior", 2)]

    def _state(self, y, u, f):
        return -self["problem.nu"] * y.d2(0) + u * y.value - f

    def pde_residual(self, jets, u, data=None):
        data = data or {}
        y = jets["y"]
        f = data.get("f", 0.0)
        out = {"state": self._state(y, u, f)}
        if "p" in jets:
            p = jets["p"]
            out["adjoint"] = -self["problem.nu"] * p.d2(0) + u * p.value - (y.value - data.get("y_obs", 0.0))
            out["stationarity"] = (-y.value * p.value + self.beta * u
                                   - data.get("lam", 0.0) - self.beta * data.get("z", 0.0))
        return out

    def loss(self, method, J, ctx, w):
        c = ctx["interior"]
        b = self.beta
        u = J["u", "interior"].value
        y = J["y", "interior"]
        r_y = self._state(y, u, c["f"])
        if method == "ato":
            fit = y.value - c["y_obs"]
            aug = u - (c["z"] + c["lam"] / b)
            obj = (0.5 * fit.square() + (0.5 * b) * aug.square()).mean()
            return w.w_o * obj + w.w_e * mean_sq(r_y)
        p = J["p", "interior"]
        r_p = -self["problem.nu"] * p.d2(0) + u * p.value - (y.value - c["y_obs"])
        r_u = -1.0 * (y.value * p.value) + b * u - (c["lam"] + b * c["z"])
        return w.w_u * mean_sq(r_u) + w.w_y * mean_sq(r_y) + w.w_p * mean_sq(r_p)

    def tv_config(self):
        s = self.settings
        return proxmod.TvConfig(s["prox.zeta"], s["prox.iterations"], s["prox.boundary"])

    def prox(self, v):
        return proxmod.prox_tv(v, self["problem.gamma"] / self.beta, self.tv_config(), self.beta)

    def u_true(self):
        return ScalarField(self.lattice, u_true_fn(self.mesh.nodes))

    def objective_value(self, y, u, z=None):
        w = self.lattice.weights()
        fid = 0.5 * float(np.sum(w * (y.values - self.y_obs.values) ** 2))
        return fid + self["problem.gamma"] * proxmod.total_variation(u if z is None else z, (1.0,))
