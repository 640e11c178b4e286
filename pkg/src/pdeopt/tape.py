"""Minimal reverse-mode differentiation for elementwise residual algebra.

Residuals of the optimality systems are short elementwise expressions in the
network jets (values, first and pure second partials) and fixed data.  A
:class:`Var` records each product and sum; :func:`backward` returns the
cotangent of a scalar loss with respect to every leaf.
"""
from __future__ import annotations

import numpy as np

from .nnet import Jet

__all__ = ["Var", "VarJet", "backward", "leaf_jet", "const"]


class Var:
    __slots__ = ("value", "parents", "grad")
    # make ``ndarray op Var`` defer to the reflected Var method
    __array_ufunc__ = None

    def __init__(self, value, parents=()):
        self.value = value
        self.parents = parents  # tuples (parent, vjp)
        self.grad = None

    # arithmetic ------------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Var):
            return Var(self.value + other.value, ((self, _ident), (other, _ident)))
        return Var(self.value + other, ((self, _ident),))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return Var(self.value - other.value, ((self, _ident), (other, _negate)))
        return Var(self.value - other, ((self, _ident),))

    def __rsub__(self, other):
        return Var(other - self.value, ((self, _negate),))

    def __neg__(self):
        return Var(-self.value, ((self, _negate),))

    def __mul__(self, other):
        if isinstance(other, Var):
            a, b = self.value, other.value
            return Var(a * b, ((self, lambda g: g * b), (other, lambda g: g * a)))
        return Var(self.value * other, ((self, lambda g: g * other),))

    __rmul__ = __mul__

    def __truediv__(self, c):
        if isinstance(c, Var):
            raise TypeError("division by a Var is not supported")
        return self * (1.0 / c)

    def square(self):
        a = self.value
        return Var(a * a, ((self, lambda g: 2.0 * a * g),))

    def mean(self):
        a = np.asarray(self.value)
        n = a.size
        return Var(float(a.mean()), ((self, lambda g: np.full(a.shape, g / n)),))

    def sum(self):
        a = np.asarray(self.value)
        return Var(float(a.sum()), ((self, lambda g: np.full(a.shape, g)),))


def _ident(g):
    return g


def _negate(g):
    return -g


def const(x):
    return np.asarray(x, float)


def backward(out: Var) -> None:
    """Accumulate ``d out / d leaf`` into ``leaf.grad`` for every reachable node."""
    order, seen = [], set()
    stack = [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p, _ in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:
        node.grad = None
    out.grad = 1.0
    for node in reversed(order):
        if node.grad is None:
            continue
        for p, vjp in node.parents:
            g = vjp(node.grad)
            p.grad = g if p.grad is None else p.grad + g


class VarJet:
    """A :class:`Jet` whose components are tape leaves."""

    def __init__(self, jet: Jet):
        self.jet = jet
        self.value = Var(jet.value)
        d = 0 if jet.grad is None else jet.grad.shape[1]
        self._grad = [Var(jet.grad[:, k]) for k in range(d)]
        self._diag = [Var(jet.diag2[:, j]) for j in range(len(jet.diag_axes))]

    def d1(self, axis: int) -> Var:
        return self._grad[axis]

    def d2(self, axis: int) -> Var:
        return self._diag[self.jet.diag_axes.index(axis)]

    def cotangent(self):
        n = self.jet.value.shape[0]

        def full(v):
            if v.grad is None:
                return np.zeros(n)
            return np.broadcast_to(np.asarray(v.grad, float), (n,))

        dv = full(self.value)
        dg = np.stack([full(v) for v in self._grad], axis=1) if self._grad else None
        dh = np.stack([full(v) for v in self._diag], axis=1) if self._diag else None
        return dv, dg, dh


def leaf_jet(jet: Jet) -> VarJet:
    return VarJet(jet)
