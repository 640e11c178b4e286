"""Proximal maps for the nonsmooth z-update.

Pointwise maps (box projection, soft thresholding and their composition)
are closed form.  The total-variation prox runs an inner ADMM on the split
``grad z = w``; its linear z-step is diagonal in the discrete Fourier basis
because the forward-difference operator is circulant under a periodic
boundary rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import ScalarField

__all__ = [
    "TvConfig",
    "ProxDivergenceError",
    "project_box",
    "shrink",
    "prox_sparse_box",
    "prox_tv",
    "tv_prox_array",
    "total_variation",
    "forward_diff",
    "forward_diff_adjoint",
]


class ProxDivergenceError(FloatingPointError):
    def __init__(self, iteration: int):
        super().__init__(f"non-finite value in TV prox at inner iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class TvConfig:
    """Inner ADMM settings for the TV prox.

    ``zeta`` is the penalty on ``grad z = w`` measured against the unscaled
    objective ``gamma*TV(z) + beta/2*||z - v||^2``; ``boundary`` is
    ``"periodic"`` (circulant wrap) or ``"reflect"`` (even extension to twice
    the length, then periodic, which yields a free/Neumann boundary).
    """

    zeta: float = 0.5
    iterations: int = 80
    boundary: str = "periodic"

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if self.iterations < 1:
            raise ValueError("at least one inner iteration is required")
        if self.boundary not in ("periodic", "reflect"):
            raise ValueError(f"unknown boundary rule {self.boundary!r}")


def _values(v):
    if isinstance(v, ScalarField):
        return v.values, v.with_values
    return np.asarray(v, dtype=float), lambda a: a


def project_box(v, a: float = -np.inf, b: float = np.inf):
    """Pointwise clamp ``max(min(v, b), a)``."""
    if a > b:
        raise ValueError("box requires a <= b")
    arr, wrap = _values(v)
    return wrap(np.maximum(np.minimum(arr, b), a))


def shrink(v, zeta: float):
    """Soft thresholding ``sgn(v) * max(|v| - zeta, 0)``."""
    if zeta < 0:
        raise ValueError("threshold must be non-negative")
    arr, wrap = _values(v)
    return wrap(np.sign(arr) * np.maximum(np.abs(arr) - zeta, 0.0))


def prox_sparse_box(v, zeta: float, a: float, b: float):
    """Prox of ``zeta*|z| + indicator[a, b]``: shrink first, then clamp."""
    if not a <= 0 <= b:
        raise ValueError("sparse-box prox needs a <= 0 <= b")
    return project_box(shrink(v, zeta), a, b)


def forward_diff(z: np.ndarray, spacing) -> list[np.ndarray]:
    """Periodic forward differences, one array per axis."""
    return [(np.roll(z, -1, axis=ax) - z) / h for ax, h in enumerate(spacing)]


def forward_diff_adjoint(q: list[np.ndarray], spacing) -> np.ndarray:
    out = np.zeros_like(q[0])
    for ax, (qa, h) in enumerate(zip(q, spacing)):
        out += (np.roll(qa, 1, axis=ax) - qa) / h
    return out


def total_variation(z, spacing=None, periodic: bool = False) -> float:
    """Anisotropic discrete TV: cell measure times the l1 norm of forward differences.

    In 1D this is ``sum |z[i+1] - z[i]|``.
    """
    if isinstance(z, ScalarField):
        spacing = z.lattice.spacing if spacing is None else spacing
        z = z.values
    z = np.asarray(z, float)
    spacing = tuple(spacing)
    cell = float(np.prod(spacing))
    total = 0.0
    for ax, h in enumerate(spacing):
        if periodic:
            d = np.roll(z, -1, axis=ax) - z
        else:
            d = np.diff(z, axis=ax)
        total += cell / h * np.sum(np.abs(d))
    return float(total)


def _laplacian_symbol(shape, spacing) -> np.ndarray:
    sym = np.zeros(shape)
    for ax, (n, h) in enumerate(zip(shape, spacing)):
        k = np.arange(n)
        s = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / h**2
        bshape = [1] * len(shape)
        bshape[ax] = n
        sym = sym + s.reshape(bshape)
    return sym


def tv_prox_array(
    v: np.ndarray,
    spacing,
    gamma: float,
    beta: float,
    zeta: float,
    iterations: int,
    boundary: str = "periodic",
) -> np.ndarray:
    """Approximate ``argmin_z gamma*TV(z) + beta/2*||z - v||^2`` on a 1D/2D grid."""
    v = np.asarray(v, float)
    if v.ndim not in (1, 2):
        raise ValueError("TV prox supports 1D and 2D grids")
    if gamma == 0:
        return v.copy()
    if boundary == "reflect":
        ext = v
        for ax in range(v.ndim):
            ext = np.concatenate([ext, np.flip(ext, axis=ax)], axis=ax)
        z = tv_prox_array(ext, spacing, gamma, beta, zeta, iterations, "periodic")
        return z[tuple(slice(0, n) for n in v.shape)].copy()

    ratio = zeta / beta
    denom = 1.0 + ratio * _laplacian_symbol(v.shape, spacing)
    thresh = gamma / zeta
    # start from the splitting of v itself, so few sweeps already keep its edges
    w = [shrink(d, thresh) for d in forward_diff(v, spacing)]
    mu = [np.zeros_like(v) for _ in range(v.ndim)]
    z = v
    for j in range(iterations):
        rhs = v + ratio * forward_diff_adjoint([wa + ma / zeta for wa, ma in zip(w, mu)], spacing)
        z = np.real(np.fft.ifftn(np.fft.fftn(rhs) / denom))
        dz = forward_diff(z, spacing)
        w = [shrink(d - m / zeta, thresh) for d, m in zip(dz, mu)]
        mu = [m - zeta * (d - wa) for m, d, wa in zip(mu, dz, w)]
        if not np.all(np.isfinite(z)):
            raise ProxDivergenceError(j)
    return z


def prox_tv(v, gamma_over_beta: float, cfg: TvConfig = TvConfig(), beta: float = 1.0):
    """TV prox ``argmin_z (gamma/beta)*TV(z) + 1/2*||z - v||^2``.

    ``beta`` only sets the scale the inner penalty ``cfg.zeta`` is measured
    against; the minimizer depends on ``gamma_over_beta`` alone.
    """
    if gamma_over_beta < 0:
        raise ValueError("gamma/beta must be non-negative")
    if isinstance(v, ScalarField):
        arr, spacing = v.values, v.lattice.spacing
    else:
        raise TypeError("prox_tv needs a ScalarField (the lattice spacing matters)")
    z = tv_prox_array(
        arr, spacing, gamma_over_beta * beta, beta, cfg.zeta, cfg.iterations, cfg.boundary
    )
    return v.with_values(z)
