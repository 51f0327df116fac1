"""
Discrete Freidlin-Wentzell action, two-point minimization and quasipotentials.

A path is ``N + 1`` nodes on a uniform time mesh with step ``tau``. On each
interval the velocity is the forward difference ``v_k = (x_{k+1} - x_k) / tau``
and the Lagrangian is averaged over the two end nodes:

    S = tau * sum_k [L(x_k, v_k) + L(x_{k+1}, v_k)] / 2

The gradient of ``S`` is exact (analytic in ``L``), so the reported
Euler-Lagrange residual ``max |dS/dx_k| / tau`` measures stationarity of the
discrete problem itself.

Minimization runs L-BFGS from scipy on the interior nodes, then polishes with a
few Newton steps on the block-tridiagonal Hessian, which L-BFGS alone reaches
only slowly once ``N`` is in the thousands.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded
from scipy.optimize import minimize

from .errors import InvalidParam, NoConvergence, SingularDiffusion
from .models import ModelSpec

__all__ = [
    "DiscretePath",
    "ActionResult",
    "path_action",
    "action_gradient",
    "node_lagrangian",
    "minimize_action",
    "quasipotential",
    "quasipotential_field",
    "check_attractor",
]

EL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Nodes ``(N + 1, dim)`` at uniform ``times``."""

    times: np.ndarray
    nodes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if t.ndim != 1 or len(t) != len(x) or len(t) < 2:
            raise InvalidParam("path needs matching times and nodes, at least two of each")
        dt = np.diff(t)
        if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * dt.mean():
            raise InvalidParam("path times must be increasing and uniformly spaced")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "nodes", x)

    @classmethod
    def linear(cls, x0, x1, T: float, N: int) -> "DiscretePath":
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        s = np.linspace(0.0, 1.0, N + 1)[:, None]
        return cls(np.linspace(0.0, T, N + 1), (1 - s) * x0 + s * x1)

    @property
    def N(self) -> int:
        return len(self.times) - 1

    @property
    def tau(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass(frozen=True, eq=False)
class ActionResult:
    path: DiscretePath
    action: float
    el_residual: float
    converged: bool
    n_iter: int = 0


def _pieces(model: ModelSpec, x, v):
    """Return L, dL/dx, dL/dv at nodes ``x`` with velocities ``v`` (both ``(m, dim)``)."""
    D = model.D(x)
    u = v - model.b(x)
    try:
        Du = np.linalg.solve(D, u[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularDiffusion(f"{model.name}: D singular along the path") from exc
    y = 0.5 * Du
    L = 0.5 * np.einsum("mi,mi->m", u, y)
    # dL/dx_i = -(db_j/dx_i) y_j - y_j (dD_jk/dx_i) y_k
    Lx = -np.einsum("mji,mj->mi", model.jac_b(x), y)
    if not model.constant_diffusion:
        Lx -= np.einsum("mj,mjki,mk->mi", y, model.dD(x), y)
    return L, Lx, y


def _action_and_grad(model: ModelSpec, nodes: np.ndarray, tau: float):
    v = np.diff(nodes, axis=0) / tau
    La, Lxa, ya = _pieces(model, nodes[:-1], v)
    Lb, Lxb, yb = _pieces(model, nodes[1:], v)
    S = 0.5 * tau * float(np.sum(La + Lb))
    g = np.zeros_like(nodes)
    g[:-1] += 0.5 * tau * Lxa
    g[1:] += 0.5 * tau * Lxb
    gv = 0.5 * (ya + yb)  # dS/dv_k * (1/tau)
    g[:-1] -= gv
    g[1:] += gv
    return S, g


def path_action(model: ModelSpec, path: DiscretePath) -> float:
    """Discrete action of ``path`` (trapezoid in time, forward-difference velocities).

    Raises
    ------
    SingularDiffusion
    """
    return _action_and_grad(model, path.nodes, path.tau)[0]


def action_gradient(model: ModelSpec, path: DiscretePath) -> np.ndarray:
    """``dS/dx_k`` at every node, shape ``(N + 1, dim)``; endpoint rows included."""
    return _action_and_grad(model, path.nodes, path.tau)[1]


def node_lagrangian(model: ModelSpec, path: DiscretePath) -> np.ndarray:
    """``L(x_k, xdot_k)`` at the nodes using second-order velocities, for export."""
    v = np.gradient(path.nodes, path.tau, axis=0, edge_order=2)
    return _pieces(model, path.nodes, v)[0]


def _el_residual(grad, tau):
    return float(np.max(np.abs(grad[1:-1]))) / tau if len(grad) > 2 else 0.0


def _banded_hessian(model, nodes, tau):
    """Symmetric block-tridiagonal Hessian of S over interior nodes, upper banded storage.

    Built from the analytic gradient by central differences, perturbing every
    third node at once so that ``3 * dim`` pairs of gradient calls suffice.
    """
    n = nodes.shape[1]
    m = len(nodes) - 2
    size = m * n
    bw = 2 * n - 1
    ab = np.zeros((bw + 1, size))
    scale = np.maximum(1.0, np.abs(nodes[1:-1]))
    for color in range(3):
        idx = np.arange(color, m, 3)
        for j in range(n):
            h = 1e-5 * scale[idx, j]
            xp = nodes.copy()
            xm = nodes.copy()
            xp[idx + 1, j] += h
            xm[idx + 1, j] -= h
            gp = _action_and_grad(model, xp, tau)[1][1:-1]
            gm = _action_and_grad(model, xm, tau)[1][1:-1]
            dg = gp - gm
            for node in idx:
                col = node * n + j
                hh = 2 * h[np.searchsorted(idx, node)]
                lo = max(0, node - 1)
                hi = min(m, node + 2)
                rows = np.arange(lo * n, hi * n)
                vals = dg[lo:hi].reshape(-1) / hh
                keep = rows <= col
                ab[bw + rows[keep] - col, col] = vals[keep]
    return ab


def _newton_polish(model, nodes, tau, target, max_steps=20):
    """Damped Newton steps on the interior nodes.

    Long horizons leave a soft mode (shifting the transition in time costs
    almost nothing), so each step tries increasing Levenberg shifts ``mu`` and
    keeps the first one that lowers the residual without raising the action.
    """
    nodes = nodes.copy()
    S, g = _action_and_grad(model, nodes, tau)
    for _ in range(max_steps):
        res0 = float(np.max(np.abs(g[1:-1])))
        if res0 / tau <= target:
            break
        ab = _banded_hessian(model, nodes, tau)
        scale = float(np.max(np.abs(ab[-1])))
        improved = False
        for mu in (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2):
            shifted = ab.copy()
            shifted[-1] += mu * scale
            try:
                step = solveh_banded(shifted, -g[1:-1].reshape(-1))
            except np.linalg.LinAlgError:
                continue
            trial = nodes.copy()
            trial[1:-1] += step.reshape(-1, nodes.shape[1])
            S1, g1 = _action_and_grad(model, trial, tau)
            if np.isfinite(S1) and S1 <= S + 1e-11 * max(1.0, abs(S)) and np.max(np.abs(g1[1:-1])) < res0:
                nodes, S, g = trial, S1, g1
                improved = True
                break
        if not improved:
            break
    return nodes, S, g


def minimize_action(model: ModelSpec, x0, x1, T: float, N: int, initial: DiscretePath | None = None,
                    *, tol: float = EL_TOL, maxiter: int = 20000, raise_on_failure: bool = True) -> ActionResult:
    """Minimize the discrete action over interior nodes with pinned endpoints.

    Parameters
    ----------
    model : ModelSpec
    x0, x1 : array_like
        Pinned start and end states.
    T : float
        Horizon.
    N : int
        Number of intervals, at least 8.
    initial : DiscretePath, optional
        Starting path; linear interpolation by default. Different starts may
        land in different local minima.
    tol : float
        Target Euler-Lagrange residual ``max |dS/dx_k| / tau``.

    Raises
    ------
    NoConvergence
        The residual target was not met; ``exc.result`` holds the best path
        with ``converged=False``. Pass ``raise_on_failure=False`` to get that
        result returned instead.
    """
    N = int(N)
    if N < 8:
        raise InvalidParam(f"N must be >= 8, got {N}")
    if not T > 0:
        raise InvalidParam(f"T must be > 0, got {T}")
    x0 = model.points(x0).reshape(model.dim)
    x1 = model.points(x1).reshape(model.dim)
    if initial is None:
        initial = DiscretePath.linear(x0, x1, T, N)
    elif initial.N != N or abs(initial.horizon - T) > 1e-12 * T:
        raise InvalidParam("initial path does not match (T, N)")
    nodes = initial.nodes.copy()
    nodes[0], nodes[-1] = x0, x1
    tau = T / N
    shape = nodes[1:-1].shape

    def fun(z):
        nodes[1:-1] = z.reshape(shape)
        S, g = _action_and_grad(model, nodes, tau)
        return S, g[1:-1].reshape(-1)

    res = minimize(fun, nodes[1:-1].reshape(-1), jac=True, method="L-BFGS-B",
                   options={"maxiter": maxiter, "maxcor": 20, "gtol": 0.1 * tol * tau, "ftol": 1e-15})
    nodes[1:-1] = res.x.reshape(shape)
    S, g = _action_and_grad(model, nodes, tau)
    if _el_residual(g, tau) > tol:
        nodes, S, g = _newton_polish(model, nodes, tau, 0.1 * tol)
    resid = _el_residual(g, tau)
    out = ActionResult(DiscretePath(initial.times, nodes), max(S, 0.0), resid, resid <= tol, int(res.nit))
    if not out.converged and raise_on_failure:
        raise NoConvergence(f"{model.name}: Euler-Lagrange residual {resid:.3g} > {tol:g} (T={T}, N={N})", out)
    return out


def check_attractor(model: ModelSpec, x_attr, tol: float = 1e-8) -> np.ndarray:
    """Confirm ``x_attr`` is a hyperbolic stable fixed point of ``xdot = b``."""
    x = model.points(x_attr).reshape(model.dim)
    bx = float(np.max(np.abs(model.b(x))))
    if bx > tol:
        raise InvalidParam(f"{model.name}: |b(x_attr)| = {bx:.3g} exceeds {tol:g}; not a fixed point")
    ev = np.linalg.eigvals(model.jac_b(x))
    if np.any(ev.real >= 0):
        raise InvalidParam(f"{model.name}: fixed point {x} is not stable (eigenvalues {ev})")
    return x


def quasipotential(model: ModelSpec, x_attr, x_target, horizons=None, steps_per_unit: int = 64,
                   rtol: float = 1e-3, tol: float = EL_TOL):
    """Infimum of the two-point action from an attractor over growing horizons.

    Horizons default to ``1, 2, 4, ..., 64`` with ``steps_per_unit * T``
    intervals each. The sweep stops once two successive minima differ by less
    than ``rtol`` (relative). Each minimization is warm-started from the
    previous path, padded with time spent at the attractor.

    Returns
    -------
    value : float
    path : DiscretePath

    Raises
    ------
    NoConvergence
        The schedule was exhausted without meeting ``rtol``.
    """
    x_attr = check_attractor(model, x_attr)
    x_target = model.points(x_target).reshape(model.dim)
    horizons = [2.0 ** k for k in range(7)] if horizons is None else list(horizons)
    prev = None
    best = None
    history = []
    for T in horizons:
        N = max(8, int(round(steps_per_unit * T)))
        init = None
        if best is not None:
            old = best.path.nodes
            pad = N - best.path.N
            if pad >= 0:
                init = DiscretePath(np.linspace(0.0, T, N + 1), np.vstack([np.repeat(x_attr[None], pad, 0), old]))
        best = minimize_action(model, x_attr, x_target, T, N, initial=init, tol=tol)
        history.append((T, best.action))
        if prev is not None and abs(best.action - prev) <= rtol * max(abs(best.action), 1e-300):
            return best.action, best.path
        prev = best.action
    raise NoConvergence(f"{model.name}: quasipotential did not settle over horizons {horizons}: {history}", best)


def quasipotential_field(model: ModelSpec, x_attr, targets, **kwargs) -> np.ndarray:
    """Quasipotential at each row of ``targets``; the attractor itself maps to 0."""
    x_attr = model.points(x_attr).reshape(model.dim)
    targets = model.points(targets).reshape(-1, model.dim)
    out = np.empty(len(targets))
    for i, z in enumerate(targets):
        out[i] = 0.0 if np.allclose(z, x_attr, atol=1e-12) else quasipotential(model, x_attr, z, **kwargs)[0]
    return out
