"""Shared plumbing for the benchmark presets.

A preset is a flat mapping of dotted keys to scalars (``admm.beta``,
``train.adam_iterations``, ``problem.nu`` ...).  Overrides may only touch
existing keys and are cast to the type of the default value.
"""
from __future__ import annotations

import numpy as np

from .. import tape
from ..field import Lattice, ScalarField, l2_norm
from ..nnet import Jet

__all__ = ["ProblemSpec", "ConfigError", "apply_overrides", "mean_sq"]


class ConfigError(KeyError):
    """Unknown key or uncastable value in a configuration."""

    def __str__(self):
        return str(self.args[0]) if self.args else "configuration error"


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _cast(key, default, value):
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                v = value.strip().lower()
                if v in _TRUE:
                    return True
                if v in _FALSE:
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(default, int):
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(default).__name__}") from None


def apply_overrides(defaults: dict, overrides: dict | None) -> dict:
    out = dict(defaults)
    for key, value in (overrides or {}).items():
        if key not in defaults:
            raise ConfigError(f"unknown configuration key {key!r}")
        out[key] = _cast(key, defaults[key], value)
    return out


def mean_sq(r):
    """Mean of squares of a residual (tape node or array)."""
    if isinstance(r, tape.Var):
        return r.square().mean()
    return float(np.mean(np.asarray(r) ** 2))


COMMON = {
    "seed": 0,
    "data.noise_seed": 1,
    "admm.warm_start": True,
    "admm.early_stop_tol": 0.0,
    "train.adam_beta1": 0.9,
    "train.adam_beta2": 0.999,
    "train.adam_eps": 1e-8,
    "train.lbfgs_memory": 10,
    "train.c1": 1e-4,
    "train.c2": 0.9,
    "train.gtol": 1e-10,
    "train.warm_adam_iterations": -1,
    "train.warm_lbfgs_iterations": -1,
    "expert.allow_ato": False,
}


class ProblemSpec:
    """Base class; subclasses provide defaults and the residual algebra."""

    id = ""
    input_dim = 1
    time_axis: int | None = None
    DEFAULTS: dict = {}
    DESK: dict = {}
    ota_nets: tuple = ()
    ato_nets: tuple = ("u", "y")
    ato_default = False

    def __init__(self, settings: dict):
        self.settings = settings
        self._build()

    @classmethod
    def defaults(cls) -> dict:
        return {**COMMON, **cls.DEFAULTS}

    def _build(self):
        pass

    def __getitem__(self, key):
        return self.settings[key]

    # -- formulation ---------------------------------------------------------
    @property
    def methods(self) -> tuple:
        if self.ato_default or self.settings["expert.allow_ato"]:
            return ("ota", "ato")
        return ("ota",)

    @property
    def beta(self) -> float:
        return self.settings["admm.beta"]

    def lattice_box(self):
        return self.lattice.lower, self.lattice.upper

    def sample(self, policy, rng, iteration=0):
        from ..pinnsolve import sample_points

        lo, hi = self.lattice_box()
        return sample_points(lo, hi, self.set_plans(), policy, rng, iteration, self.time_axis)

    def point_data(self, set_name: str, x: np.ndarray) -> dict:
        return {}

    def nets(self, method):
        raise NotImplementedError

    def requests(self, method):
        raise NotImplementedError

    def loss(self, method, J, ctx, weights):
        raise NotImplementedError

    def recover_u(self, method, vals, z, lam, x):
        """u values at points ``x`` from network values (and z, lam at the same points)."""
        return vals["u"]

    # -- fields --------------------------------------------------------------
    def zeros(self) -> ScalarField:
        return ScalarField.zeros(self.lattice)

    def u_true(self) -> ScalarField | None:
        return None

    def relative_error(self, u: ScalarField) -> float:
        t = self.u_true()
        if t is None:
            return float("nan")
        return l2_norm(u - t) / l2_norm(t)

    def objective_value(self, y: ScalarField, u: ScalarField, z: ScalarField | None = None) -> float:
        raise NotImplementedError

    def metrics(self, u: ScalarField, y: ScalarField, z: ScalarField) -> dict:
        """Scalar summaries of a final iterate for reports."""
        return {"rel_err_u": self.relative_error(u), "rel_err_z": self.relative_error(z),
                "primal_gap": l2_norm(u - z) / max(l2_norm(z), 1e-300)}

    def prox(self, v: ScalarField) -> ScalarField:
        raise NotImplementedError

    def pde_residual(self, jets: dict, u, data: dict | None = None) -> dict:
        """Residuals of the state (and adjoint, where declared) equations at points.

        ``jets`` maps unknown names (``"y"``, ``"p"``) to :class:`Jet` objects
        evaluated at the same points; ``u`` is the control there.
        """
        raise NotImplementedError

    def describe(self) -> dict:
        return {"id": self.id, "lattice": self.lattice.to_dict(), "settings": dict(self.settings)}


def as_jet(value, grad=None, diag2=None, diag_axes=None) -> Jet:
    """Build a batched :class:`Jet` from plain arrays (helper for hand-set residual checks)."""
    v = np.atleast_1d(np.asarray(value, float))
    g = None if grad is None else np.atleast_2d(np.asarray(grad, float))
    h = None if diag2 is None else np.atleast_2d(np.asarray(diag2, float))
    if h is not None and diag_axes is None:
        diag_axes = tuple(range(h.shape[1]))
    return Jet(v, g, h, tuple(diag_axes or ()))
