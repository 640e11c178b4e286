"""1D finite-element reference solvers.

Piecewise-linear elements on a uniform mesh of (a, b) with homogeneous
Dirichlet conditions.  Zero-order terms and loads use the lumped mass matrix
(nodal quadrature), so every linear solve is tridiagonal.  The Burgers
convection term is integrated exactly for P1 functions:

    N_i(y) = (y[i+1] - y[i-1]) * (y[i+1] + y[i] + y[i-1]) / 6.

Reduced gradients come from discrete adjoints of exactly these systems, so
they agree with finite differences of the discrete objectives to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .field import Lattice, ScalarField

__all__ = [
    "Fem1dMesh",
    "SingularSystemError",
    "NewtonStagnationError",
    "fem_elliptic_1d",
    "fem_burgers_1d",
    "burgers_adjoint",
    "ex1_reduced",
    "gauss_newton_ex1",
    "ex2_reduced",
    "projected_gradient_ex2",
    "RefResult",
]


class SingularSystemError(np.linalg.LinAlgError):
    pass


class NewtonStagnationError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"Newton stagnated after {iterations} iterations, residual {residual:.3e}")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class Fem1dMesh:
    lower: float = 0.0
    upper: float = 1.0
    elements: int = 100

    def __post_init__(self):
        if self.elements < 2:
            raise ValueError("need at least two elements")
        if not self.upper > self.lower:
            raise ValueError("empty interval")

    @property
    def h(self) -> float:
        return (self.upper - self.lower) / self.elements

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.elements + 1)

    @property
    def lattice(self) -> Lattice:
        return Lattice((self.lower,), (self.upper,), (self.elements + 1,), ("x1",))

    def mass(self) -> np.ndarray:
        """Lumped mass (trapezoid) weights at all nodes."""
        w = np.full(self.elements + 1, self.h)
        w[0] = w[-1] = self.h / 2
        return w


def _nodal(v, mesh: Fem1dMesh) -> np.ndarray:
    if isinstance(v, ScalarField):
        v = v.flat()
    if callable(v):
        v = v(mesh.nodes)
    v = np.broadcast_to(np.asarray(v, float), (mesh.elements + 1,))
    return np.array(v)


def _stiffness_bands(mesh: Fem1dMesh, nu: float, reaction: np.ndarray) -> np.ndarray:
    """Banded (3, n-1) form of nu*K + h*diag(reaction) on interior nodes."""
    m = mesh.elements - 1
    ab = np.zeros((3, m))
    ab[0, 1:] = -nu / mesh.h
    ab[1, :] = 2 * nu / mesh.h + mesh.h * reaction
    ab[2, :-1] = -nu / mesh.h
    return ab


def _solve(ab, rhs):
    try:
        x = solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("non-finite solution")
    return x


def _embed(inner: np.ndarray) -> np.ndarray:
    out = np.zeros(inner.shape[0] + 2)
    out[1:-1] = inner
    return out


def fem_elliptic_1d(mesh: Fem1dMesh, nu: float, u, f) -> np.ndarray:
    """Nodal solution of ``-nu y'' + u y = f``, ``y(a) = y(b) = 0``."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    u = _nodal(u, mesh)
    f = _nodal(f, mesh)
    ab = _stiffness_bands(mesh, nu, u[1:-1])
    return _embed(_solve(ab, mesh.h * f[1:-1]))


def _burgers_residual(y, nu, h, src):
    yl, yc, yr = y[:-2], y[1:-1], y[2:]
    return nu / h * (2 * yc - yl - yr) + (yr - yl) * (yr + yc + yl) / 6.0 - h * src


def _burgers_jacobian(y, nu, h):
    """Banded Jacobian of the interior Burgers residual."""
    yl, yc, yr = y[:-2], y[1:-1], y[2:]
    m = yc.size
    ab = np.zeros((3, m))
    ab[1] = 2 * nu / h + (yr - yl) / 6.0
    # row i: d/dy[i-1] sits on the sub-diagonal, d/dy[i+1] on the super-diagonal
    ab[0, 1:] = (-nu / h + (2 * yr + yc) / 6.0)[:-1]
    ab[2, :-1] = (-nu / h + (-2 * yl - yc) / 6.0)[1:]
    return ab


def fem_burgers_1d(mesh: Fem1dMesh, nu: float, u, tol: float = 1e-12, max_iter: int = 50,
                   return_iterations: bool = False):
    """Nodal solution of ``-nu y'' + y y' = u`` with zero boundary values (damped Newton)."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    u = _nodal(u, mesh)
    h = mesh.h
    y = np.zeros(mesh.elements + 1)
    src = u[1:-1]
    F = _burgers_residual(y, nu, h, src)
    res = np.max(np.abs(F))
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NewtonStagnationError(res, it)
        step = _solve(_burgers_jacobian(y, nu, h), -F)
        t = 1.0
        for _ in range(30):
            y_new = y.copy()
            y_new[1:-1] += t * step
            F_new = _burgers_residual(y_new, nu, h, src)
            r_new = np.max(np.abs(F_new))
            if r_new < res or r_new <= tol:
                break
            t *= 0.5
        else:
            raise NewtonStagnationError(res, it)
        y, F, res = y_new, F_new, r_new
        it += 1
    return (y, it) if return_iterations else y


def burgers_adjoint(mesh: Fem1dMesh, nu: float, y: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``DF(y)^T p = rhs`` on interior nodes (discrete form of ``-nu p'' - y p'``)."""
    ab = _burgers_jacobian(y, nu, mesh.h)
    # transpose of a banded matrix: swap and shift the off-diagonals
    abt = np.zeros_like(ab)
    abt[1] = ab[1]
    abt[0, 1:] = ab[2, :-1]
    abt[2, :-1] = ab[0, 1:]
    return _embed(_solve(abt, rhs[1:-1]))


@dataclass
class RefResult:
    u: np.ndarray
    iterations: int = 0
    flag: str = "ok"
    history: list = field(default_factory=list)  # objective per iteration


# ----------------------------------------------------------------------------
# inverse potential problem, u-subproblem


def ex1_reduced(mesh, nu, f, y_obs, z, lam, beta, u, need_gradient=True):
    """Objective ``1/2 sum m (y(u)-y_obs)^2 - (lam, u-z) + beta/2 ||u-z||^2`` and its adjoint gradient.

    All sums use the lumped mass weights.  Returns ``(value, gradient, y)``.
    """
    w = mesh.mass()
    y = fem_elliptic_1d(mesh, nu, u, f)
    d = u - z
    val = 0.5 * np.sum(w * (y - y_obs) ** 2) + np.sum(w * (-lam * d + 0.5 * beta * d * d))
    if not need_gradient:
        return val, None, y
    ab = _stiffness_bands(mesh, nu, _nodal(u, mesh)[1:-1])
    p = _embed(_solve(ab, (w * (y - y_obs))[1:-1]))
    g = w * (beta * d - lam)
    g[1:-1] -= mesh.h * y[1:-1] * p[1:-1]
    return val, g, y


def gauss_newton_ex1(mesh: Fem1dMesh, nu: float, f, y_obs, z, lam, beta: float, iterations: int = 20,
                     u0=None, c: float = 1e-4, halvings: int = 30, tol: float = 1e-12) -> RefResult:
    """Gauss-Newton with Armijo backtracking on the discrete u-subproblem of the potential problem.

    The residual vector is ``[sqrt(m)(y(u) - y_obs), sqrt(beta m)(u - z - lam/beta)]``
    (the augmented terms written as a completed square).
    """
    y_obs, z, lam = (_nodal(a, mesh) for a in (y_obs, z, lam))
    f = _nodal(f, mesh)
    w = mesh.mass()
    sw = np.sqrt(w)
    u = np.array(z if u0 is None else _nodal(u0, mesh), float)
    res = RefResult(u)
    val, g, y = ex1_reduced(mesh, nu, f, y_obs, z, lam, beta, u)
    res.history.append(val)
    n = u.size
    for it in range(iterations):
        if np.linalg.norm(g) <= tol:
            break
        ab = _stiffness_bands(mesh, nu, u[1:-1])
        # sensitivity dy/du = -A^{-1} h diag(y) on interior nodes
        S = np.zeros((n, n))
        rhs = np.zeros((n - 2, n))
        rhs[np.arange(n - 2), np.arange(1, n - 1)] = -mesh.h * y[1:-1]
        S[1:-1] = _solve(ab, rhs)
        Jr = np.vstack([sw[:, None] * S, np.diag(np.sqrt(beta) * sw)])
        H = Jr.T @ Jr
        step = np.linalg.solve(H, -g)
        t, slope = 1.0, float(g @ step)
        for _ in range(halvings):
            try:
                val_new, _, _ = ex1_reduced(mesh, nu, f, y_obs, z, lam, beta, u + t * step, False)
            except SingularSystemError:
                val_new = np.inf
            if val_new <= val + c * t * slope:
                break
            t *= 0.5
        else:
            res.flag = "line_search_exhausted"
            break
        u = u + t * step
        val, g, y = ex1_reduced(mesh, nu, f, y_obs, z, lam, beta, u)
        res.history.append(val)
        res.iterations = it + 1
    res.u = u
    return res


# ----------------------------------------------------------------------------
# Burgers control, full problem


def ex2_reduced(mesh, nu, alpha, y_d, u, need_gradient=True):
    """Objective ``1/2 sum m (y(u)-y_d)^2 + alpha/2 sum m u^2`` and its adjoint gradient."""
    w = mesh.mass()
    y = fem_burgers_1d(mesh, nu, u)
    val = 0.5 * np.sum(w * (y - y_d) ** 2) + 0.5 * alpha * np.sum(w * u * u)
    if not need_gradient:
        return val, None, y, None
    p = burgers_adjoint(mesh, nu, y, w * (y - y_d))
    g = alpha * w * u
    g[1:-1] += mesh.h * p[1:-1]
    return val, g, y, p


def projected_gradient_ex2(mesh: Fem1dMesh, nu: float, alpha: float, y_d, lower: float, upper: float,
                           iterations: int = 500, tol: float = 1e-8, c: float = 1e-4,
                           halvings: int = 30, u0=None) -> RefResult:
    """Projected gradient with Armijo backtracking for the box-constrained Burgers control problem.

    The search direction is the mass-weighted (L2) gradient ``alpha u + p``; each
    iteration tries ``s = 1/alpha`` first, the fixed-point step of the optimality system.
    """
    y_d = _nodal(y_d, mesh)
    w = mesh.mass()
    u = np.clip(np.zeros(mesh.elements + 1) if u0 is None else _nodal(u0, mesh), lower, upper)
    res = RefResult(u)
    val, g, _, _ = ex2_reduced(mesh, nu, alpha, y_d, u)
    res.history.append(val)
    for it in range(iterations):
        gl2 = g / w
        stat = np.sqrt(np.sum(w * (u - np.clip(u - gl2, lower, upper)) ** 2))
        if stat <= tol:
            res.flag = "converged"
            break
        s = 1.0 / alpha
        for _ in range(halvings):
            u_new = np.clip(u - s * gl2, lower, upper)
            val_new, _, _, _ = ex2_reduced(mesh, nu, alpha, y_d, u_new, False)
            if val_new <= val + c * float(g @ (u_new - u)):
                break
            s *= 0.5
        else:
            res.flag = "line_search_exhausted"
            break
        u = u_new
        val, g, _, _ = ex2_reduced(mesh, nu, alpha, y_d, u)
        res.history.append(val)
        res.iterations = it + 1
    res.u = u
    return res
