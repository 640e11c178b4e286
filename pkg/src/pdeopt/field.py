"""Uniform lattices, nodal scalar fields, quadrature norms and seeded noise.

Nodal values are stored in C order over the lattice axes: the first axis
varies slowest, the last axis fastest.
"""
from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

__all__ = [
    "Lattice",
    "ScalarField",
    "SeededRng",
    "OutOfDomainError",
    "interp",
    "interp_many",
    "l2_norm",
    "inner",
    "add_noise",
    "write_csv",
    "read_csv",
    "format_float",
]

_BOX_TOL = 1e-12


class OutOfDomainError(ValueError):
    """Raised when a point lies outside a lattice's bounding box."""


def format_float(x: float) -> str:
    return "%.17g" % x


@dataclass(frozen=True)
class Lattice:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    nodes: tuple[int, ...]
    axis_names: tuple[str, ...] | None = None

    def __post_init__(self):
        lower = tuple(float(a) for a in self.lower)
        upper = tuple(float(b) for b in self.upper)
        nodes = tuple(int(n) for n in self.nodes)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "nodes", nodes)
        if not (len(lower) == len(upper) == len(nodes)):
            raise ValueError("lower, upper and nodes must have the same length")
        if not 1 <= len(nodes) <= 3:
            raise ValueError("lattice dimension must be 1, 2 or 3")
        if any(n < 2 for n in nodes):
            raise ValueError("every axis needs at least 2 nodes")
        if any(not b > a for a, b in zip(lower, upper)):
            raise ValueError("upper bound must exceed lower bound on every axis")
        if self.axis_names is None:
            object.__setattr__(self, "axis_names", tuple(f"x{i + 1}" for i in range(len(nodes))))
        elif len(self.axis_names) != len(nodes):
            raise ValueError("one axis name per axis")

    @classmethod
    def uniform(cls, lower, upper, nodes, axis_names=None) -> "Lattice":
        """Build a lattice, broadcasting scalar bounds/node counts over ``len(nodes)`` axes."""
        nodes = tuple(np.atleast_1d(nodes).tolist())
        d = len(nodes)
        lower = tuple(np.broadcast_to(np.asarray(lower, float), (d,)).tolist())
        upper = tuple(np.broadcast_to(np.asarray(upper, float), (d,)).tolist())
        return cls(lower, upper, nodes, axis_names)

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.lower, self.upper, self.nodes))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, n) for a, b, n in zip(self.lower, self.upper, self.nodes)]

    def points(self) -> np.ndarray:
        """All nodes as an ``(size, dim)`` array in storage order."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights, shaped like the lattice."""
        w = np.ones(self.shape)
        for ax, (n, h) in enumerate(zip(self.nodes, self.spacing)):
            w1 = np.full(n, h)
            w1[0] = w1[-1] = h / 2
            shape = [1] * self.dim
            shape[ax] = n
            w = w * w1.reshape(shape)
        return w

    def contains(self, x: np.ndarray, tol: float = _BOX_TOL) -> np.ndarray:
        x = np.atleast_2d(x)
        lo = np.asarray(self.lower) - tol
        hi = np.asarray(self.upper) + tol
        return np.all((x >= lo) & (x <= hi), axis=1)

    def to_dict(self) -> dict:
        return {
            "lower": list(self.lower),
            "upper": list(self.upper),
            "nodes": list(self.nodes),
            "axis_names": list(self.axis_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Lattice":
        return cls(tuple(d["lower"]), tuple(d["upper"]), tuple(d["nodes"]), tuple(d["axis_names"]))


@dataclass(frozen=True)
class ScalarField:
    lattice: Lattice
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.lattice.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, lattice: Lattice) -> "ScalarField":
        return cls(lattice, np.zeros(lattice.shape))

    @classmethod
    def from_function(cls, lattice: Lattice, fn) -> "ScalarField":
        """Sample ``fn(points) -> values`` at every node; ``points`` is ``(size, dim)``."""
        return cls(lattice, np.asarray(fn(lattice.points()), float).reshape(lattice.shape))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.lattice, values)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def _check(self, other: "ScalarField") -> None:
        if other.lattice != self.lattice:
            raise ValueError("fields live on different lattices")

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            other = other.values
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            other = other.values
        return self.with_values(self.values - other)

    def __mul__(self, c):
        if isinstance(c, ScalarField):
            self._check(c)
            c = c.values
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def __truediv__(self, c):
        return self.with_values(self.values / c)


@dataclass(frozen=True)
class SeededRng:
    """Reproducible random streams.

    Every consumer asks for a stream by purpose name; the stream is seeded from
    ``SeedSequence(seed, spawn_key=(crc32(purpose),))`` so independent purposes
    never share draws and adding a new purpose does not perturb existing ones.
    """

    seed: int
    algorithm: str = "PCG64"

    def generator(self, purpose: str, *index: int) -> np.random.Generator:
        key = (zlib.crc32(purpose.encode()),) + tuple(int(i) for i in index)
        ss = np.random.SeedSequence(int(self.seed) & (2**64 - 1), spawn_key=key)
        if self.algorithm != "PCG64":
            raise ValueError(f"unsupported RNG algorithm {self.algorithm!r}")
        return np.random.Generator(np.random.PCG64(ss))


def _interpolator(f: ScalarField) -> RegularGridInterpolator:
    return RegularGridInterpolator(tuple(f.lattice.axes()), f.values, method="linear")


def interp_many(f: ScalarField, x: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of ``f`` at the rows of ``x`` (``(n, dim)``)."""
    x = np.asarray(x, float).reshape(-1, f.lattice.dim)
    inside = f.lattice.contains(x)
    if not np.all(inside):
        bad = x[~inside][0]
        raise OutOfDomainError(f"point {bad.tolist()} outside lattice box")
    lo = np.asarray(f.lattice.lower)
    hi = np.asarray(f.lattice.upper)
    return _interpolator(f)(np.clip(x, lo, hi))


def interp(f: ScalarField, x) -> float:
    return float(interp_many(f, np.asarray(x, float).reshape(1, -1))[0])


def inner(f: ScalarField, g: ScalarField) -> float:
    f._check(g)
    return float(np.sum(f.lattice.weights() * f.values * g.values))


def l2_norm(f: ScalarField) -> float:
    """Trapezoidal approximation of the continuous L2 norm over the lattice box."""
    return float(np.sqrt(np.sum(f.lattice.weights() * f.values**2)))


def add_noise(f: ScalarField, delta: float, rng: SeededRng, purpose: str = "noise") -> ScalarField:
    """Return ``f + delta * ||f|| * g`` with ``g`` i.i.d. standard normal per node."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return f
    g = rng.generator(purpose).standard_normal(f.lattice.shape)
    return f.with_values(f.values + delta * l2_norm(f) * g)


def write_csv(f: ScalarField, path=None) -> str:
    """Dump ``f`` as CSV (coordinates then value, 17 significant digits).

    Returns the text; also writes it to ``path`` when given.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(f.lattice.axis_names) + ["value"])
    for p, v in zip(f.lattice.points(), f.flat()):
        w.writerow([format_float(c) for c in p] + [format_float(v)])
    text = buf.getvalue()
    if path is not None:
        from .io import atomic_write_text

        atomic_write_text(path, text)
    return text


def read_csv(path) -> ScalarField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    names = tuple(header[:-1])
    coords = body[:, :-1]
    axes = [np.unique(coords[:, i]) for i in range(coords.shape[1])]
    lattice = Lattice(
        tuple(a[0] for a in axes), tuple(a[-1] for a in axes), tuple(len(a) for a in axes), names
    )
    if lattice.size != body.shape[0]:
        raise ValueError(f"{path}: rows do not form a full lattice")
    return ScalarField(lattice, body[:, -1])


def lattice_for(lower: Sequence[float], upper: Sequence[float], h: float, axis_names=None) -> Lattice:
    """Lattice with spacing ``h`` (rounded to the nearest whole node count) on every axis."""
    nodes = [int(round((b - a) / h)) + 1 for a, b in zip(lower, upper)]
    return Lattice(tuple(lower), tuple(upper), tuple(nodes), axis_names)
