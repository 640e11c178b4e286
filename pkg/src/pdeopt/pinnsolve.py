"""PINN solvers for the smooth u-subproblem.

Two formulations share the machinery here:

* AtO (approximate-then-optimize): networks for u and y minimise the
  augmented objective plus a weighted PDE-residual penalty.
* OtA (optimize-then-approximate): networks fit the residuals of the
  subproblem's first-order optimality system, either the full system with a
  u network or a reduced one where u is a pointwise function of the adjoint.

Problems describe their networks, point sets and residual algebra; this
module samples points, wires jets through the elementwise tape, and trains
with Adam followed by L-BFGS.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nnet, optim, tape
from .field import ScalarField, SeededRng, interp_many

__all__ = [
    "LossWeights",
    "SetPlan",
    "SampleSets",
    "TrainConfig",
    "UnsupportedSolverError",
    "sample_points",
    "assemble_ato_loss",
    "assemble_ota_loss",
    "LossOracle",
    "solve_subproblem",
    "SubproblemResult",
]


class UnsupportedSolverError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    w_o: float = 1.0
    w_e: float = 1.0
    w_u: float = 1.0
    w_y: float = 1.0
    w_p: float = 1.0
    w_i: float = 1.0
    w_b: float = 1.0
    w_b1: float = 1.0
    w_b2: float = 1.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v >= 0:
                raise ValueError(f"loss weight {k} must be non-negative")


# ----------------------------------------------------------------------------
# training points


@dataclass(frozen=True)
class SetPlan:
    """How to place one named point set.

    ``kind``: ``"interior"`` (inside the box), ``"boundary"`` (on the spatial
    faces, times drawn over the time axis if any) or ``"slice"`` (spatial
    interior at the fixed time ``at``).  ``layout``: ``"grid"`` uses
    deterministic nodes, ``"random"`` uniform draws.  For grids ``count`` is
    nodes per spatial axis (``closed`` keeps the box end points) or, for
    boundaries, midpoints per face.
    """

    kind: str
    count: int
    layout: str = "grid"
    closed: bool = True
    at: float | None = None
    share: str | None = None  # reuse the spatial draws of another set

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("point counts must be at least 1")
        if self.kind not in ("interior", "boundary", "slice"):
            raise ValueError(f"unknown point-set kind {self.kind!r}")
        if self.layout not in ("grid", "random"):
            raise ValueError(f"unknown layout {self.layout!r}")


@dataclass
class SampleSets:
    points: dict
    normals: dict = field(default_factory=dict)
    resample: bool = False

    def __getitem__(self, name):
        return self.points[name]


def _grid_axis(lo, hi, n, closed):
    if closed:
        return np.linspace(lo, hi, n)
    h = (hi - lo) / (n + 1)
    return lo + h * np.arange(1, n + 1)


def _faces(lower, upper, spatial):
    """Spatial faces as ``(axis, value, outward sign)``."""
    return [(ax, side_val, sgn) for ax in spatial
            for side_val, sgn in ((lower[ax], -1.0), (upper[ax], 1.0))]


def sample_points(lower, upper, plans: dict, policy: str, rng, iteration: int = 0,
                  time_axis: int | None = None) -> SampleSets:
    """Place every planned set inside the box ``[lower, upper]``.

    ``policy`` is ``"fixed"`` (identical sets at every outer iteration) or
    ``"resample"`` (random layouts redrawn per iteration from the stream
    ``("samples", iteration)``).
    """
    if policy not in ("fixed", "resample"):
        raise ValueError(f"unknown sampling policy {policy!r}")
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    d = lower.size
    spatial = [a for a in range(d) if a != time_axis]
    if isinstance(rng, SeededRng):
        gen = rng.generator("samples", iteration if policy == "resample" else 0)
    else:
        gen = rng
    pts, normals = {}, {}
    spatial_draws = {}
    for name, plan in plans.items():
        if plan.kind == "interior":
            if plan.layout == "grid":
                axes = [_grid_axis(lower[a], upper[a], plan.count, plan.closed) for a in range(d)]
                grids = np.meshgrid(*axes, indexing="ij")
                x = np.stack([g.ravel() for g in grids], axis=1)
            else:
                x = lower + (upper - lower) * gen.random((plan.count, d))
        elif plan.kind == "boundary":
            faces = _faces(lower, upper, spatial)
            if plan.layout == "grid":
                xs, ns = [], []
                for ax, val, sgn in faces:
                    others = [a for a in range(d) if a != ax]
                    axes = [_grid_axis(lower[a], upper[a], plan.count, False) for a in others]
                    grids = np.meshgrid(*axes, indexing="ij")
                    blk = np.empty((grids[0].size, d))
                    for a, g in zip(others, grids):
                        blk[:, a] = g.ravel()
                    blk[:, ax] = val
                    nrm = np.zeros_like(blk)
                    nrm[:, ax] = sgn
                    xs.append(blk)
                    ns.append(nrm)
                x, nv = np.vstack(xs), np.vstack(ns)
            else:
                measure = np.array([np.prod([upper[a] - lower[a] for a in range(d) if a != ax])
                                    for ax, _, _ in faces])
                which = gen.choice(len(faces), size=plan.count, p=measure / measure.sum())
                x = lower + (upper - lower) * gen.random((plan.count, d))
                nv = np.zeros_like(x)
                for i, (ax, val, sgn) in enumerate(faces):
                    sel = which == i
                    x[sel, ax] = val
                    nv[sel, ax] = sgn
            normals[name] = nv
        else:
            if plan.share is not None and plan.share in spatial_draws:
                xs = spatial_draws[plan.share]
            elif plan.layout == "grid":
                axes = [_grid_axis(lower[a], upper[a], plan.count, plan.closed) for a in spatial]
                grids = np.meshgrid(*axes, indexing="ij")
                xs = np.stack([g.ravel() for g in grids], axis=1)
            else:
                xs = lower[spatial] + (upper - lower)[spatial] * gen.random((plan.count, len(spatial)))
            spatial_draws[name] = xs
            x = np.empty((xs.shape[0], d))
            x[:, spatial] = xs
            x[:, time_axis] = plan.at
        pts[name] = x
    return SampleSets(pts, normals, policy == "resample")


# ----------------------------------------------------------------------------
# training configuration


@dataclass(frozen=True)
class TrainConfig:
    """Per-subproblem training settings.

    ``warm`` (if given) replaces ``opt`` from the second outer iteration on,
    when networks start from the previous iterate.
    """

    opt: optim.OptConfig
    weights: LossWeights = LossWeights()
    policy: str = "fixed"
    hidden: tuple = (50, 50, 50, 50)
    warm: optim.OptConfig | None = None

    def budget(self, k: int) -> optim.OptConfig:
        return self.warm if (k > 0 and self.warm is not None) else self.opt


# ----------------------------------------------------------------------------
# loss assembly


def _check_method(problem, method):
    if method not in problem.methods:
        raise UnsupportedSolverError(f"{problem.id} has no {method!r} formulation enabled")


def point_context(problem, samples: SampleSets, z: ScalarField, lam: ScalarField) -> dict:
    """Per-set arrays: interpolated ``z`` and ``lam`` plus the problem's fixed data."""
    ctx = {}
    for name, x in samples.points.items():
        if x.shape[0] == 0:
            raise ValueError(f"point set {name!r} is empty")
        ctx[name] = {"z": interp_many(z, x), "lam": interp_many(lam, x), "x": x}
        if name in samples.normals:
            ctx[name]["normal"] = samples.normals[name]
        ctx[name].update(problem.point_data(name, x))
    return ctx


class LossOracle:
    """Scalar loss over all networks of one formulation, with exact gradients.

    Call with a flat vector holding every network's parameters (in the order
    of ``names``); returns ``(loss, gradient)``.
    """

    def __init__(self, problem, method, ctx, weights: LossWeights, widths: dict):
        self.problem = problem
        self.method = method
        self.ctx = ctx
        self.weights = weights
        self.ansatz = problem.nets(method)
        self.names = list(self.ansatz)
        self.widths = widths
        self.sizes = [nnet.param_count(widths[n]) for n in self.names]
        self.requests = problem.requests(method)
        self.evaluations = 0

    def split(self, theta):
        out, pos = {}, 0
        for n, s in zip(self.names, self.sizes):
            out[n] = nnet.MlpParams.from_vector(self.widths[n], theta[pos:pos + s])
            pos += s
        return out

    def join(self, nets: dict) -> np.ndarray:
        return np.concatenate([nets[n].to_vector() for n in self.names])

    def _jet_requests(self):
        idx = {n: i for i, n in enumerate(self.names)}
        return [nnet.JetRequest(idx[r[0]], self.ansatz[r[0]], self.ctx[r[1]]["x"], r[2],
                                r[3] if len(r) > 3 else None) for r in self.requests]

    def value_of(self, jets: dict):
        """Loss as a tape node from a mapping ``(net, set) -> VarJet``."""
        return self.problem.loss(self.method, jets, self.ctx, self.weights)

    def __call__(self, theta):
        nets = self.split(theta)
        reqs = self._jet_requests()
        keys = [(r[0], r[1]) for r in self.requests]

        def fn(jets):
            vj = {k: tape.leaf_jet(j) for k, j in zip(keys, jets)}
            L = self.value_of(vj)
            tape.backward(L)
            return L.value, [vj[k].cotangent() for k in keys]

        self.evaluations += 1
        loss, grads = nnet.loss_grad([nets[n] for n in self.names], reqs, fn)
        return loss, np.concatenate(grads)

    def evaluate(self, nets: dict) -> float:
        return self(self.join(nets))[0]


def _assemble(problem, method, nets_widths, z, lam, samples, weights):
    _check_method(problem, method)
    ctx = point_context(problem, samples, z, lam)
    return LossOracle(problem, method, ctx, weights, nets_widths)


def assemble_ato_loss(problem, widths: dict, z, lam, samples, weights) -> LossOracle:
    """Augmented objective (equal-weight means over the sets) plus weighted PDE residuals."""
    return _assemble(problem, "ato", widths, z, lam, samples, weights)


def assemble_ota_loss(problem, widths: dict, z, lam, samples, weights) -> LossOracle:
    """Weighted mean-squared residuals of the subproblem's optimality system."""
    return _assemble(problem, "ota", widths, z, lam, samples, weights)


# ----------------------------------------------------------------------------
# subproblem solve


@dataclass
class SubproblemResult:
    nets: dict
    u: ScalarField
    y: ScalarField
    trace: list
    status: str


def network_widths(problem, method, hidden) -> dict:
    d = problem.input_dim
    return {n: (d, *hidden, 1) for n in problem.nets(method)}


def init_networks(problem, method, hidden, rng: SeededRng) -> dict:
    widths = network_widths(problem, method, hidden)
    return {n: nnet.init(w, rng.generator("init", i)) for i, (n, w) in enumerate(widths.items())}


def lattice_fields(problem, method, nets: dict, z: ScalarField, lam: ScalarField):
    """Evaluate the trained networks on the reference lattice: ``(u, y)`` fields."""
    lat = problem.lattice
    x = lat.points()
    ans = problem.nets(method)
    vals = {n: nnet.eval_jets(nets[n], ans[n], x, 0).value for n in nets}
    u = problem.recover_u(method, vals, z.flat(), lam.flat(), x)
    return ScalarField(lat, u), ScalarField(lat, vals["y"])


def solve_subproblem(problem, nets: dict, z: ScalarField, lam: ScalarField, train: TrainConfig,
                     method: str, rng: SeededRng, k: int = 0, samples: SampleSets | None = None):
    """Train the networks of one u-subproblem (Adam, then L-BFGS) and evaluate u, y on the lattice."""
    _check_method(problem, method)
    if samples is None:
        samples = problem.sample(train.policy, rng, k)
    widths = {n: net.widths for n, net in nets.items()}
    oracle = _assemble(problem, method, widths, z, lam, samples, train.weights)
    cfg = train.budget(k)
    theta = oracle.join(nets)
    trace, status = [], "ok"
    try:
        if cfg.adam_iterations:
            r = optim.adam_run(oracle, theta, cfg)
            theta, trace = r.theta, r.trace
        if cfg.lbfgs_iterations:
            r = optim.lbfgs_run(oracle, theta, cfg, step_offset=len(trace))
            theta, status = r.theta, r.status
            trace = trace + r.trace
    except nnet.TrainingDivergenceError as exc:
        exc.args = (f"outer iteration {k}, method {method}: {exc.args[0]}",)
        raise
    new = oracle.split(theta)
    u, y = lattice_fields(problem, method, new, z, lam)
    return SubproblemResult(new, u, y, trace, status)
