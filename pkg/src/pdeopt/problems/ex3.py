"""Discontinuous source identification on the unit square from boundary data.

``min 1/2 int_{dOmega} |y - y_obs|^2 + gamma TV_omega(u)`` subject to
``-Lap y + c y = u`` in Omega, ``dy/dn = 0`` on the boundary, and ``u = 0``
outside omega = (0.25, 0.75)^2.  The OtA formulation uses the reduced
system with ``u = chi_omega (-p + lam + beta z) / beta`` and ``p = beta * NN``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import nnet, prox as proxmod
from ..field import Lattice, ScalarField, SeededRng, add_noise, interp_many
from .base import ProblemSpec, mean_sq

OMEGA = (0.25, 0.75)


def u_true_fn(x):
    """3 on [0.25, 0.5) x [0.25, 0.75], -9 on [0.5, 0.75] x [0.25, 0.75], 0 elsewhere."""
    x = np.atleast_2d(x)
    x1, x2 = x[:, 0], x[:, 1]
    band = (x2 >= 0.25) & (x2 <= 0.75)
    w1 = band & (x1 >= 0.25) & (x1 < 0.5)
    w2 = band & (x1 >= 0.5) & (x1 <= 0.75)
    return 3.0 * w1 - 9.0 * w2


def omega_mask(x, tol=1e-12):
    x = np.atleast_2d(x)
    lo, hi = OMEGA
    return np.all((x >= lo - tol) & (x <= hi + tol), axis=1).astype(float)


def neumann_fd_solve(source: np.ndarray, c: float, h: float) -> np.ndarray:
    """5-point solve of ``-Lap y + c y = source`` with zero normal derivative (ghost-node reflection)."""
    n = source.shape[0]
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    L = sp.diags([off, main, off], [-1, 0, 1]).tolil()
    L[0, 1] = -2.0
    L[n - 1, n - 2] = -2.0
    L = sp.csr_matrix(L) / h**2
    eye = sp.identity(n)
    A = (sp.kron(L, eye) + sp.kron(eye, L) + c * sp.identity(n * n)).tocsc()
    return spla.spsolve(A, source.ravel()).reshape(n, n)


class SourceIdentification(ProblemSpec):
    id = "ex3"
    input_dim = 2
    DEFAULTS = {
        "problem.c": 1.0,
        "problem.delta": 0.1,
        "problem.gamma": 3e-4,
        "problem.data_nodes": 65,
        "admm.beta": 5e-2,
        "admm.iterations": 350,
        "prox.zeta": 5e-5,
        "prox.iterations": 80,
        "prox.boundary": "periodic",
        "net.hidden_layers": 3,
        "net.width": 32,
        "train.adam_iterations": 20000,
        "train.adam_lr": 1e-4,
        "train.lbfgs_iterations": 1000,
        "samples.policy": "fixed",
        "samples.interior": 31,
        "samples.boundary": 128,
        "weights.w_o": 1.0,
        "weights.w_e": 1.0,
        "weights.w_y": 1.0,
        "weights.w_p": 1.0,
        "weights.w_i_per_point": 1.0,
        "weights.w_b_per_point": 1.0,
    }
    # about 50 minutes on one core
    DESK = {
        "train.adam_iterations": 5000,
        "train.warm_adam_iterations": 100,
        "train.warm_lbfgs_iterations": 20,
    }

    def _build(self):
        s = self.settings
        n = s["problem.data_nodes"]
        if (n - 1) % 4:
            raise ValueError("problem.data_nodes - 1 must be divisible by 4 so omega aligns with nodes")
        self.lattice = Lattice((0.0, 0.0), (1.0, 1.0), (n, n))
        h = 1.0 / (n - 1)
        x = self.lattice.points()
        self.mask = omega_mask(x).reshape(n, n)
        q = (n - 1) // 4
        self.omega_slice = (slice(q, 3 * q + 1), slice(q, 3 * q + 1))
        self.omega_lattice = Lattice((OMEGA[0],) * 2, (OMEGA[1],) * 2, (2 * q + 1,) * 2)
        self.y_true = ScalarField(self.lattice, neumann_fd_solve(u_true_fn(x).reshape(n, n), s["problem.c"], h))
        self.y_obs = add_noise(self.y_true, s["problem.delta"], SeededRng(s["data.noise_seed"]))
        bw = np.zeros((n, n))
        edge = np.full(n, h)
        edge[0] = edge[-1] = h / 2
        for sl in ((0, slice(None)), (-1, slice(None)), (slice(None), 0), (slice(None), -1)):
            bw[sl] += edge
        self.boundary_weights = bw

    def set_plans(self):
        from ..pinnsolve import SetPlan

        s = self.settings
        return {
            "interior": SetPlan("interior", s["samples.interior"], "grid", closed=False),
            "boundary": SetPlan("boundary", s["samples.boundary"], "grid"),
        }

    def point_data(self, name, x):
        if name == "interior":
            return {"chi": omega_mask(x)}
        return {"y_obs": interp_many(self.y_obs, x)}

    def nets(self, method):
        if method == "ota":
            return {"y": nnet.IDENTITY, "p": nnet.scaled(self.beta)}
        return {"u": nnet.IDENTITY, "y": nnet.IDENTITY}

    def requests(self, method):
        if method == "ota":
            return [("y", "interior", 2), ("p", "interior", 2), ("y", "boundary", 1), ("p", "boundary", 1)]
        return [("u", "interior", 0), ("y", "interior", 2), ("y", "boundary", 1)]

    def u_from_adjoint(self, p, z, lam, chi):
        return chi * ((lam + self.beta * z) - p) * (1.0 / self.beta)

    def recover_u(self, method, vals, z, lam, x):
        chi = omega_mask(x)
        if method == "ota":
            return self.u_from_adjoint(vals["p"], z, lam, chi)
        return vals["u"] * chi

    def _pde(self, y, u):
        return -1.0 * (y.d2(0) + y.d2(1)) + self["problem.c"] * y.value - u

    @staticmethod
    def _dn(y, normal):
        return normal[:, 0] * y.d1(0) + normal[:, 1] * y.d1(1)

    def pde_residual(self, jets, u, data=None):
        out = {"state": self._pde(jets["y"], u)}
        if "p" in jets:
            out["adjoint"] = self._pde(jets["p"], 0.0)
        return out

    def loss(self, method, J, ctx, w):
        ci, cb = ctx["interior"], ctx["boundary"]
        w_i = w.w_i * self["weights.w_i_per_point"] * ci["x"].shape[0]
        w_b = w.w_b * self["weights.w_b_per_point"] * cb["x"].shape[0]
        y_i, y_b = J["y", "interior"], J["y", "boundary"]
        if method == "ota":
            p_i, p_b = J["p", "interior"], J["p", "boundary"]
            u = self.u_from_adjoint(p_i.value, ci["z"], ci["lam"], ci["chi"])
            state = w_i * mean_sq(self._pde(y_i, u)) + w_b * mean_sq(self._dn(y_b, cb["normal"]))
            adj = (w_i * mean_sq(self._pde(p_i, 0.0))
                   + w_b * mean_sq(self._dn(p_b, cb["normal"]) - (y_b.value - cb["y_obs"])))
            return w.w_y * state + w.w_p * adj
        b = self.beta
        u = J["u", "interior"].value * ci["chi"]
        aug = u - ci["chi"] * (ci["z"] + ci["lam"] / b)
        obj = 0.5 * (y_b.value - cb["y_obs"]).square().mean() + (0.5 * b) * aug.square().mean()
        pde = w_i * mean_sq(self._pde(y_i, u)) + w_b * mean_sq(self._dn(y_b, cb["normal"]))
        return w.w_o * obj + w.w_e * pde

    def tv_config(self):
        s = self.settings
        return proxmod.TvConfig(s["prox.zeta"], s["prox.iterations"], s["prox.boundary"])

    def prox(self, v):
        sub = ScalarField(self.omega_lattice, v.values[self.omega_slice])
        z = proxmod.prox_tv(sub, self["problem.gamma"] / self.beta, self.tv_config(), self.beta)
        out = np.zeros(self.lattice.shape)
        out[self.omega_slice] = z.values
        return v.with_values(out)

    def u_true(self):
        return ScalarField(self.lattice, u_true_fn(self.lattice.points()))

    def objective_value(self, y, u, z=None):
        fid = 0.5 * float(np.sum(self.boundary_weights * (y.values - self.y_obs.values) ** 2))
        c = (u if z is None else z).values[self.omega_slice]
        return fid + self["problem.gamma"] * proxmod.total_variation(c, self.omega_lattice.spacing)
