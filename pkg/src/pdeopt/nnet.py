"""Fully-connected tanh networks with exact input-derivative jets.

A forward pass carries, for every sample point, the network value, its first
partials and a chosen subset of pure second partials through each layer.
All quantities of one layer are stacked row-wise so every layer costs one
matrix product.  ``jet_backward`` is the hand-derived reverse of that
recurrence, so parameter gradients of losses built from derivatives come
from a single reverse sweep.

Weights follow the ``(fan_out, fan_in)`` convention; the flat parameter
vector lists ``W_1, b_1, W_2, b_2, ...`` with row-major weights.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .field import SeededRng

__all__ = [
    "MlpParams",
    "AnsatzSpec",
    "Jet",
    "JetValue",
    "TrainingDivergenceError",
    "init",
    "forward",
    "jet_forward",
    "jet_backward",
    "eval_jet",
    "eval_jets",
    "ansatz_backward",
    "loss_grad",
    "save_checkpoint",
    "load_checkpoint",
    "IDENTITY",
    "interval_bubble",
    "scaled",
]


class TrainingDivergenceError(FloatingPointError):
    """A loss evaluated to a non-finite value."""

    def __init__(self, message: str, points=None):
        super().__init__(message)
        self.points = points


@dataclass
class MlpParams:
    widths: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.widths[l + 1], self.widths[l]) or b.shape != (self.widths[l + 1],):
                raise ValueError(f"layer {l} shapes {W.shape}, {b.shape} do not chain with {self.widths}")

    @property
    def size(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for W, b in zip(self.weights, self.biases) for a in (W, b)])

    @classmethod
    def from_vector(cls, widths: Sequence[int], theta: np.ndarray) -> "MlpParams":
        widths = tuple(widths)
        Ws, bs, pos = [], [], 0
        for a, b in zip(widths[:-1], widths[1:]):
            Ws.append(theta[pos:pos + a * b].reshape(b, a))
            pos += a * b
            bs.append(theta[pos:pos + b])
            pos += b
        if pos != theta.size:
            raise ValueError("parameter vector length does not match widths")
        return cls(widths, Ws, bs)

    def copy(self) -> "MlpParams":
        return MlpParams(self.widths, [W.copy() for W in self.weights], [b.copy() for b in self.biases])


def param_count(widths: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def init(widths: Sequence[int], rng) -> MlpParams:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights and biases.

    ``rng`` is a ``numpy.random.Generator`` or a :class:`SeededRng` (which
    contributes its ``"init"`` stream).
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2:
        raise ValueError("a network needs at least input and output widths")
    if any(w <= 0 for w in widths):
        raise ValueError("layer widths must be positive")
    if isinstance(rng, SeededRng):
        rng = rng.generator("init")
    Ws, bs = [], []
    for a, b in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(a)
        Ws.append(rng.uniform(-bound, bound, size=(b, a)))
        bs.append(rng.uniform(-bound, bound, size=b))
    return MlpParams(widths, Ws, bs)


# ----------------------------------------------------------------------------
# activation


def _tanh_derivs(a: np.ndarray):
    """tanh and its first three derivatives at ``a``, written via ``t = tanh(a)``."""
    t = np.tanh(a)
    s = 1.0 - t * t
    return t, s, -2.0 * t * s, -2.0 * s * (1.0 - 3.0 * t * t)


def forward(net: MlpParams, x: np.ndarray) -> np.ndarray:
    """Plain network values at the rows of ``x`` (no derivatives)."""
    z = np.asarray(x, float)
    last = len(net.weights) - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = z @ W.T + b
        if l < last:
            z = np.tanh(z)
    return z[:, 0] if z.shape[1] == 1 else z


# ----------------------------------------------------------------------------
# jets


@dataclass
class Jet:
    """Value, first partials and selected pure second partials at ``n`` points.

    ``diag2[:, j]`` holds the second partial along axis ``diag_axes[j]``.
    """

    value: np.ndarray
    grad: np.ndarray | None = None
    diag2: np.ndarray | None = None
    diag_axes: tuple[int, ...] = ()

    def d1(self, axis: int):
        return self.grad[:, axis]

    def d2(self, axis: int):
        return self.diag2[:, self.diag_axes.index(axis)]


@dataclass
class JetValue:
    """Jet of a scalar function at a single point."""

    value: float
    grad: np.ndarray
    diag2: np.ndarray


@dataclass
class _Tape:
    n: int
    d: int
    order: int
    diag_axes: tuple[int, ...]
    layers: list = field(default_factory=list)


def _split(Z, n, d, m):
    return Z[:n], Z[n:n * (1 + d)], Z[n * (1 + d):n * (1 + d + m)]


def jet_forward(net: MlpParams, x: np.ndarray, order: int = 2, diag_axes=None):
    """Propagate jets of the raw network through every layer.

    ``order`` 0 gives values only, 1 adds all first partials, 2 adds pure
    second partials along ``diag_axes`` (default: every axis).
    Returns ``(Jet, tape)``; the tape feeds :func:`jet_backward`.
    """
    x = np.asarray(x, float)
    if x.ndim != 2 or x.shape[1] != net.widths[0]:
        raise ValueError(f"points must have shape (n, {net.widths[0]}), got {x.shape}")
    n, d = x.shape
    if order < 2:
        diag_axes = ()
    elif diag_axes is None:
        diag_axes = tuple(range(d))
    diag_axes = tuple(diag_axes)
    dg = d if order >= 1 else 0
    m = len(diag_axes)
    tape = _Tape(n, dg, order, diag_axes)
    last = len(net.weights) - 1
    Z = None
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        width = W.shape[0]
        if l == 0:
            A = np.empty((n * (1 + dg + m), width))
            A[:n] = x @ W.T + b
            if dg:
                A[n:n * (1 + dg)] = np.repeat(W.T, n, axis=0)
            A[n * (1 + dg):] = 0.0
        else:
            A = Z @ W.T
            A[:n] += b
        if l == last:
            tape.layers.append((Z, None))
            Z = A
            break
        av, ag, ah = _split(A, n, dg, m)
        t, s, c2, _ = _tanh_derivs(av)
        out = np.empty_like(A)
        ov, og, oh = _split(out, n, dg, m)
        ov[:] = t
        if dg:
            ag3 = ag.reshape(dg, n, width)
            og.reshape(dg, n, width)[:] = s * ag3
        if m:
            ah3 = ah.reshape(m, n, width)
            sel = ag3[list(diag_axes)]
            oh.reshape(m, n, width)[:] = s * ah3 + c2 * sel * sel
        tape.layers.append((Z if l > 0 else x, A))
        Z = out
    v, g, h = _split(Z[:, 0], n, dg, m)
    jet = Jet(
        value=v.copy(),
        grad=g.reshape(dg, n).T.copy() if dg else None,
        diag2=h.reshape(m, n).T.copy() if m else None,
        diag_axes=diag_axes,
    )
    return jet, tape


def jet_backward(net: MlpParams, tape: _Tape, dvalue, dgrad=None, ddiag2=None) -> np.ndarray:
    """Vector-Jacobian product of :func:`jet_forward` with respect to all parameters.

    Cotangents are given for the jet components (``None`` means zero).
    Returns a flat gradient ordered like :meth:`MlpParams.to_vector`.
    """
    n, dg, m = tape.n, tape.d, len(tape.diag_axes)
    rows = n * (1 + dg + m)
    dZ = np.zeros((rows, 1))
    dZ[:n, 0] = 0.0 if dvalue is None else dvalue
    if dg and dgrad is not None:
        dZ[n:n * (1 + dg), 0] = np.asarray(dgrad).T.ravel()
    if m and ddiag2 is not None:
        dZ[n * (1 + dg):, 0] = np.asarray(ddiag2).T.ravel()
    grads = [None] * len(net.weights)
    last = len(net.weights) - 1
    for l in range(last, -1, -1):
        W = net.weights[l]
        Zin, A = tape.layers[l]
        if l != last:
            width = W.shape[0]
            av, ag, ah = _split(A, n, dg, m)
            t, s, c2, c3 = _tanh_derivs(av)
            dv, dgr, dh = _split(dZ, n, dg, m)
            dA = np.empty_like(dZ)
            dav, dag, dah = _split(dA, n, dg, m)
            acc = dv * s
            if dg:
                ag3 = ag.reshape(dg, n, width)
                dg3 = dgr.reshape(dg, n, width)
                acc = acc + c2 * np.einsum("knw,knw->nw", dg3, ag3)
                dag3 = dag.reshape(dg, n, width)
                dag3[:] = s * dg3
            if m:
                ah3 = ah.reshape(m, n, width)
                dh3 = dh.reshape(m, n, width)
                sel = ag3[list(tape.diag_axes)]
                acc = acc + np.einsum("jnw,jnw->nw", dh3, c2 * ah3 + c3 * sel * sel)
                for j, ax in enumerate(tape.diag_axes):
                    dag3[ax] += 2.0 * c2 * sel[j] * dh3[j]
                dah.reshape(m, n, width)[:] = s * dh3
            dav[:] = acc
            dZ = dA
        if l == 0:
            x = Zin
            gW = dZ[:n].T @ x
            if dg:
                # grad rows of the first layer input are unit vectors
                gW = gW + dZ[n:n * (1 + dg)].reshape(dg, n, -1).sum(axis=1).T
        else:
            gW = dZ.T @ Zin
        gb = dZ[:n].sum(axis=0)
        grads[l] = (gW, gb)
        if l > 0:
            dZ = dZ @ W
    return np.concatenate([a.ravel() for gW, gb in grads for a in (gW, gb)])


# ----------------------------------------------------------------------------
# hard-constraint ansatz  y(x) = scale * g(x) * N(x) + h(x)

JetFn = Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class AnsatzSpec:
    """``y = scale * multiplier(x) * N(x) + offset(x)``.

    ``multiplier``/``offset`` map points ``(n, d)`` to ``(value (n,), grad (n, d),
    diag2 (n, d))``; ``None`` stands for the constants 1 and 0.
    """

    name: str = "identity"
    multiplier: JetFn | None = None
    offset: JetFn | None = None
    scale: float = 1.0

    def to_dict(self) -> dict:
        return {"name": self.name, "scale": self.scale}


IDENTITY = AnsatzSpec()


def _bubble(x):
    x1 = x[:, 0]
    g = x1 * (x1 - 1.0)
    return g, (2.0 * x1 - 1.0)[:, None], np.full((x.shape[0], 1), 2.0)


def interval_bubble(scale: float = 1.0) -> AnsatzSpec:
    """``x(x-1) * N(x)`` on (0, 1): vanishes at both end points."""
    return AnsatzSpec("x(x-1)", _bubble, None, scale)


def scaled(scale: float) -> AnsatzSpec:
    return AnsatzSpec(f"scale", None, None, float(scale))


ANSATZ_BY_NAME = {"identity": lambda scale=1.0: AnsatzSpec(scale=scale), "x(x-1)": interval_bubble,
                  "scale": scaled}


def _ansatz_parts(ansatz: AnsatzSpec, x: np.ndarray):
    n, d = x.shape
    if ansatz.multiplier is None:
        g = (np.ones(n), np.zeros((n, d)), np.zeros((n, d)))
    else:
        g = ansatz.multiplier(x)
    h = None if ansatz.offset is None else ansatz.offset(x)
    return g, h


def apply_ansatz(ansatz: AnsatzSpec, x: np.ndarray, raw: Jet):
    """Jet of the wrapped output from the raw network jet; also returns a context for backward."""
    if ansatz.multiplier is None and ansatz.offset is None:
        s = ansatz.scale
        if s == 1.0:
            return raw, None
        return Jet(s * raw.value, None if raw.grad is None else s * raw.grad,
                   None if raw.diag2 is None else s * raw.diag2, raw.diag_axes), None
    (gv, gg, gh), h = _ansatz_parts(ansatz, x)
    s = ansatz.scale
    v = s * gv * raw.value
    grad = diag2 = None
    if raw.grad is not None:
        grad = s * (gg * raw.value[:, None] + gv[:, None] * raw.grad)
    if raw.diag2 is not None:
        ax = list(raw.diag_axes)
        diag2 = s * (gh[:, ax] * raw.value[:, None] + 2.0 * gg[:, ax] * raw.grad[:, ax]
                     + gv[:, None] * raw.diag2)
    if h is not None:
        hv, hg, hh = h
        v = v + hv
        if grad is not None:
            grad = grad + hg
        if diag2 is not None:
            diag2 = diag2 + hh[:, list(raw.diag_axes)]
    return Jet(v, grad, diag2, raw.diag_axes), (gv, gg, gh)


def ansatz_backward(ansatz: AnsatzSpec, ctx, raw: Jet, dvalue, dgrad, ddiag2):
    """Map cotangents of the wrapped jet to cotangents of the raw network jet."""
    s = ansatz.scale
    if ctx is None:
        return (None if dvalue is None else s * dvalue, None if dgrad is None else s * dgrad,
                None if ddiag2 is None else s * ddiag2)
    gv, gg, gh = ctx
    n = gv.shape[0]
    dv = np.zeros(n) if dvalue is None else s * gv * dvalue
    dgr = None
    if raw.grad is not None:
        dgr = np.zeros_like(raw.grad)
        if dgrad is not None:
            dv = dv + s * np.sum(gg * dgrad, axis=1)
            dgr += s * gv[:, None] * dgrad
    dh = None
    if raw.diag2 is not None:
        dh = np.zeros_like(raw.diag2)
        if ddiag2 is not None:
            ax = list(raw.diag_axes)
            dv = dv + s * np.sum(gh[:, ax] * ddiag2, axis=1)
            dgr[:, ax] += 2.0 * s * gg[:, ax] * ddiag2
            dh += s * gv[:, None] * ddiag2
    return dv, dgr, dh


def eval_jets(net: MlpParams, ansatz: AnsatzSpec, x: np.ndarray, order: int = 2, diag_axes=None) -> Jet:
    x = np.asarray(x, float)
    raw, _ = jet_forward(net, x, order, diag_axes)
    jet, _ = apply_ansatz(ansatz, x, raw)
    return jet


def eval_jet(net: MlpParams, ansatz: AnsatzSpec, x) -> JetValue:
    """Value, gradient and pure second partials of the wrapped network at one point."""
    x = np.asarray(x, float).reshape(1, -1)
    if x.shape[1] != net.widths[0]:
        raise ValueError(f"point has dimension {x.shape[1]}, network expects {net.widths[0]}")
    j = eval_jets(net, ansatz, x, 2)
    return JetValue(float(j.value[0]), j.grad[0].copy(), j.diag2[0].copy())


# ----------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class JetRequest:
    """Evaluate network ``net`` (wrapped by ``ansatz``) at ``points`` to ``order``."""

    net: int
    ansatz: AnsatzSpec
    points: np.ndarray
    order: int = 2
    diag_axes: tuple[int, ...] | None = None


def loss_grad(nets: Sequence[MlpParams], requests: Sequence[JetRequest], loss_fn):
    """Scalar loss and its exact gradient with respect to every network.

    ``loss_fn(jets)`` receives one :class:`Jet` per request and returns
    ``(loss, cotangents)`` where ``cotangents[i]`` is a ``(dvalue, dgrad,
    ddiag2)`` triple for ``jets[i]`` (entries may be ``None``).
    Returns ``(loss, [flat gradient per net])``.
    """
    raws, tapes, jets, ctxs = [], [], [], []
    for r in requests:
        raw, tape = jet_forward(nets[r.net], r.points, r.order, r.diag_axes)
        jet, ctx = apply_ansatz(r.ansatz, r.points, raw)
        raws.append(raw)
        tapes.append(tape)
        jets.append(jet)
        ctxs.append(ctx)
    loss, cots = loss_fn(jets)
    if not np.isfinite(loss):
        bad = [r.points for r, j in zip(requests, jets) if not np.all(np.isfinite(j.value))]
        raise TrainingDivergenceError(f"non-finite loss {loss}", bad or [r.points for r in requests])
    grads = [np.zeros(net.size) for net in nets]
    for r, raw, tape, ctx, cot in zip(requests, raws, tapes, ctxs, cots):
        if cot is None:
            continue
        dv, dgr, dh = ansatz_backward(r.ansatz, ctx, raw, *cot)
        grads[r.net] += jet_backward(nets[r.net], tape, dv, dgr, dh)
    return float(loss), grads


# ----------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, net: MlpParams, ansatz: AnsatzSpec, seed: int | None = None) -> None:
    from .io import atomic_write_json

    atomic_write_json(path, {
        "widths": list(net.widths),
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "ansatz": ansatz.to_dict(),
        "seed": seed,
    })


def load_checkpoint(path) -> tuple[MlpParams, AnsatzSpec, int | None]:
    with open(path) as fh:
        d = json.load(fh)
    net = MlpParams(tuple(d["widths"]), [np.array(W, float) for W in d["weights"]],
                    [np.array(b, float) for b in d["biases"]])
    a = d["ansatz"]
    ansatz = ANSATZ_BY_NAME[a["name"]](a.get("scale", 1.0))
    return net, ansatz, d.get("seed")
