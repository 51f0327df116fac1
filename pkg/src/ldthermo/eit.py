"""
Flux-dependent (extended) rate functions over position and momentum.

At time resolution ``delta_t`` the coarse velocity ``xdot = dx / delta_t``
given ``x`` is Gaussian with mean ``b(x)`` and covariance
``(2 eps / delta_t) D(x)``. In terms of the momentum
``y = D^{-1}(xdot - b) / 2`` the joint rate function is

    phi(x, y; delta_t) = phi(x) + delta_t * y^T D(x) y,

whose minimum over ``y`` is attained at ``y = 0`` and returns ``phi(x)``.

The relaxation dynamics on ``(x, y)`` reads

    dx/dt = 2 D y + b
    dy/dt = -grad(phi) / delta_t + (div v) y / 2 - alpha y,

with ``v = 2 D y + b`` and ``div v = sum_j d/dx_j (2 D_jk y_k + b_j)`` taken
at fixed ``y`` (a scalar multiplying ``y``). Along it

    d phi(x, y) / dt = flux + production_cit + production_eit
    flux            = delta_t [grad_x(y^T D y) . v + (y^T D y) div v]
    production_cit  = grad(phi) . b               (<= 0)
    production_eit  = -2 delta_t alpha y^T D y    (<= 0)

``phi`` arguments accept ``None`` (the model's analytic stationary rate
function) or a :class:`GriddedField` of node values.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize

from ._integrate import rk4
from .cit import potential_gradient
from .errors import DimUnsupported, InvalidParam, NegativeAlpha, SingularDiffusion
from .expressions import Expression
from .grid import Grid, GriddedField
from .models import ModelSpec, _fd_scalar_gradient, _fd_vector_jacobian

__all__ = [
    "eit_rate_function",
    "EITField",
    "build_eit_field",
    "Contraction",
    "contract",
    "GaussianLaw",
    "conditional_densities",
    "joint_log_density",
    "EITDynamicsConfig",
    "EITRelaxation",
    "eit_relaxation",
    "eit_vector_field",
    "eit_linearization",
    "fixed_surface_momentum",
    "NessDiagnostics",
    "ness_diagnostics",
]


def _phi_values(model: ModelSpec, phi, x):
    x = model.points(x)
    if phi is None:
        return model.phi(x)
    if isinstance(phi, GriddedField):
        interp = RegularGridInterpolator(tuple(phi.grid.axes), phi.values, method="linear", bounds_error=True)
        try:
            return interp(x.reshape(-1, model.dim)).reshape(x.shape[:-1])
        except ValueError as exc:
            raise InvalidParam("evaluation points lie outside the phi grid") from exc
    if callable(phi):
        return np.asarray(phi(x), dtype=float).reshape(x.shape[:-1])
    raise InvalidParam("phi must be None, a GriddedField or a callable returning phi values")


def _grad(model, phi, x):
    if phi is None or isinstance(phi, GriddedField):
        return potential_gradient(model, phi, x)
    return _fd_scalar_gradient(lambda z: _phi_values(model, phi, z), model.points(x))


def _yDy(model, x, y):
    return np.einsum("...i,...ij,...j->...", y, model.D(x), y)


def eit_rate_function(model: ModelSpec, phi, x, y, delta_t: float):
    """``phi(x) + delta_t * y^T D(x) y``.

    ``phi`` may also be a callable returning rate-function values here.
    """
    if not delta_t > 0:
        raise InvalidParam("delta_t must be positive")
    x = model.points(x)
    y = model.points(y)
    val = _phi_values(model, phi, x) + delta_t * _yDy(model, x, y)
    return float(val) if np.ndim(val) == 0 else val


# -- fields on the product grid -------------------------------------------------

@dataclass(frozen=True, eq=False)
class EITField:
    """``values[ix..., iy...] = phi(x) + delta_t y^T D(x) y`` on ``x_grid`` times ``y_grid``."""

    x_grid: Grid
    y_grid: Grid
    values: np.ndarray
    phi_x: np.ndarray
    delta_t: float
    D: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.x_grid.shape + self.y_grid.shape:
            raise InvalidParam("EIT field values do not match the product grid")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParam("EIT field has non-finite values")


def build_eit_field(model: ModelSpec, phi, x_grid: Grid, delta_t: float, epsilon: float | None = None,
                    y_grid: Grid | None = None, y_count: int = 41) -> EITField:
    """Tabulate the flux-dependent rate function.

    Without ``y_grid`` the momentum axes span three standard deviations of the
    momentum law ``N(0, eps / (2 delta_t) D^{-1})`` (largest over the x grid)
    with an odd node count so ``y = 0`` is a node; ``epsilon`` is then required.
    """
    if not delta_t > 0:
        raise InvalidParam("delta_t must be positive")
    if x_grid.dim != model.dim:
        raise InvalidParam("x grid and model dimensions differ")
    x = x_grid.mesh()
    D = model.D(x)
    if y_grid is None:
        if epsilon is None or not epsilon > 0:
            raise InvalidParam("a positive epsilon is needed to size the default momentum grid")
        var = epsilon / (2 * delta_t) * np.diagonal(np.linalg.inv(D), axis1=-2, axis2=-1)
        half = 3 * np.sqrt(var.reshape(-1, model.dim).max(axis=0))
        n = int(y_count) | 1
        y_grid = Grid(tuple(-half), tuple(half), (n,) * model.dim)
    elif y_grid.dim != model.dim:
        raise InvalidParam("y grid and model dimensions differ")
    phi_x = np.asarray(_phi_values(model, phi, x), dtype=float)
    y = y_grid.points()
    quad = np.einsum("ki,...ij,kj->...k", y, D, y).reshape(x_grid.shape + y_grid.shape)
    values = phi_x.reshape(x_grid.shape + (1,) * model.dim) + delta_t * quad
    return EITField(x_grid, y_grid, values, phi_x, float(delta_t), D)


@dataclass(frozen=True, eq=False)
class Contraction:
    phi_x: np.ndarray
    argmin_y: np.ndarray
    grid_min: np.ndarray
    grid_argmin_y: np.ndarray


def contract(field: EITField) -> Contraction:
    """Minimize over momentum at each position.

    The analytic minimizer of the positive-definite quadratic is ``y = 0``
    with minimum ``phi(x)``; the grid search is returned alongside as a check.
    """
    xs = field.x_grid.shape
    flat = field.values.reshape(xs + (-1,))
    k = np.argmin(flat, axis=-1)
    grid_min = np.take_along_axis(flat, k[..., None], axis=-1)[..., 0]
    grid_arg = field.y_grid.points()[k]
    argmin = np.zeros(xs + (field.y_grid.dim,))
    return Contraction(field.phi_x.copy(), argmin, grid_min, grid_arg)


# -- conditional Gaussian laws --------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianLaw:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def log_norm(self):
        """``-ln sqrt((2 pi)^n det cov)``."""
        _, logdet = np.linalg.slogdet(self.cov)
        return -0.5 * (self.dim * np.log(2 * np.pi) + logdet)

    def logpdf(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        d = v - self.mean
        sol = np.linalg.solve(self.cov, d[..., None])[..., 0]
        return self.log_norm - 0.5 * np.einsum("...i,...i->...", d, sol)

    def pdf(self, v) -> np.ndarray:
        return np.exp(self.logpdf(v))


def conditional_densities(model: ModelSpec, x, epsilon: float, delta_t: float):
    """Velocity law ``N(b, 2 eps D / delta_t)`` and momentum law ``N(0, eps D^{-1} / (2 delta_t))``.

    Raises
    ------
    SingularDiffusion
    """
    if not (epsilon > 0 and delta_t > 0):
        raise InvalidParam("epsilon and delta_t must be positive")
    x = model.points(x)
    D = model.D(x)
    eig = np.linalg.eigvalsh(D)
    if np.any(eig[..., 0] <= 1e-14 * np.maximum(1.0, np.abs(eig[..., -1]))):
        raise SingularDiffusion(f"{model.name}: D(x) is singular")
    vel = GaussianLaw(model.b(x), 2 * epsilon / delta_t * D)
    mom = GaussianLaw(np.zeros_like(x), epsilon / (2 * delta_t) * np.linalg.inv(D))
    return vel, mom


def joint_log_density(model: ModelSpec, phi, x, y, epsilon: float, delta_t: float):
    """Leading-order ``ln p(x, y)`` with ``p(x)`` proportional to ``exp(-phi / eps)``.

    Returns ``(log_density, log_norm)`` where ``log_norm`` is the momentum-law
    normalization, so ``-eps (log_density - log_norm)`` equals the
    flux-dependent rate function.
    """
    _, mom = conditional_densities(model, x, epsilon, delta_t)
    y = model.points(y)
    logp = -_phi_values(model, phi, x) / epsilon + mom.logpdf(y)
    return logp, mom.log_norm


# -- relaxation dynamics ----------------------------------------------------------

_YVAR = re.compile(r"\by([1-9][0-9]*)\b")


def _alpha_callable(alpha, dim):
    if callable(alpha):
        return alpha
    if isinstance(alpha, str):
        src = _YVAR.sub(lambda m: f"x{dim + int(m.group(1))}", alpha)
        expr = Expression(src, 2 * dim)
        return lambda x, y: expr(np.concatenate([x, y], axis=-1))
    value = float(alpha)
    return lambda x, y: np.full(np.shape(x)[:-1], value)


@dataclass(frozen=True)
class EITDynamicsConfig:
    """Damping ``alpha`` (number, expression in ``x1..xn, y1..yn``, or callable ``(x, y)``),
    time resolution and RK4 step."""

    delta_t: float
    step: float = 1e-3
    alpha: object = 0.0

    def __post_init__(self):
        if not self.delta_t > 0:
            raise InvalidParam("delta_t must be positive")
        if not self.step > 0:
            raise InvalidParam("step must be positive")
        if isinstance(self.alpha, (int, float)) and self.alpha < 0:
            raise NegativeAlpha(f"alpha = {self.alpha} < 0")


def _div_v(model, x, y):
    # sum_j d/dx_j (2 D_jk y_k + b_j)
    tr_jb = np.trace(model.jac_b(x), axis1=-2, axis2=-1)
    if model.constant_diffusion:
        return tr_jb
    return tr_jb + 2 * np.einsum("...jkj,...k->...", model.dD(x), y)


def eit_vector_field(model: ModelSpec, phi, x, y, delta_t: float, alpha_fn: Callable | None = None):
    """``(dx/dt, dy/dt, alpha)`` of the relaxation system at ``(x, y)``."""
    x = model.points(x)
    y = model.points(y)
    a = np.zeros(x.shape[:-1]) if alpha_fn is None else np.asarray(alpha_fn(x, y), dtype=float)
    if np.any(a < 0):
        raise NegativeAlpha(f"alpha < 0 at a sampled state (min {float(np.min(a)):.3g})")
    dx = 2 * np.einsum("...ij,...j->...i", model.D(x), y) + model.b(x)
    dy = (-_grad(model, phi, x) / delta_t + 0.5 * _div_v(model, x, y)[..., None] * y
          - np.asarray(a)[..., None] * y)
    return dx, dy, a


@dataclass(frozen=True, eq=False)
class EITRelaxation:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    flux_term: np.ndarray
    production_cit: np.ndarray
    production_eit: np.ndarray
    dphi_dt: np.ndarray
    alpha: np.ndarray

    @property
    def dissipation(self) -> np.ndarray:
        return -self.dphi_dt

    @property
    def cumulative_increase(self) -> float:
        inc = np.diff(self.phi)
        return float(np.sum(inc[inc > 0]))

    def ledger_columns(self) -> dict:
        cols = {"t": self.t}
        for i in range(self.x.shape[1]):
            cols[f"x{i + 1}"] = self.x[:, i]
        for i in range(self.y.shape[1]):
            cols[f"y{i + 1}"] = self.y[:, i]
        cols.update(phi=self.phi, flux_term=self.flux_term, production_cit=self.production_cit,
                    production_eit=self.production_eit, dphi_dt=self.dphi_dt)
        return cols


def eit_relaxation(model: ModelSpec, phi, cfg: EITDynamicsConfig, x0, y0, T: float) -> EITRelaxation:
    """Integrate the relaxation system with RK4 and record the rate-function ledger.

    Raises
    ------
    NegativeAlpha
        ``alpha`` is negative at any sampled state.
    BlowUp
    """
    n = model.dim
    dt = cfg.delta_t
    alpha_fn = _alpha_callable(cfg.alpha, n)
    z0 = np.concatenate([model.points(x0).reshape(n), model.points(y0).reshape(n)])

    def rhs(z):
        dx, dy, _ = eit_vector_field(model, phi, z[:n], z[n:], dt, alpha_fn)
        return np.concatenate([dx.reshape(n), dy.reshape(n)])

    t, z = rk4(rhs, z0, T, cfg.step)
    x, y = z[:, :n], z[:, n:]
    a = np.asarray(alpha_fn(x, y), dtype=float)
    if np.any(a < 0):
        raise NegativeAlpha("alpha < 0 along the trajectory")
    D = model.D(x)
    v = np.einsum("...ij,...j->...i", D, 2 * y) + model.b(x)
    q = _yDy(model, x, y)
    grad_q = np.einsum("...j,...jki,...k->...i", y, model.dD(x), y)
    flux = dt * (np.einsum("...i,...i->...", grad_q, v) + q * _div_v(model, x, y))
    prod_cit = np.einsum("...i,...i->...", _grad(model, phi, x), model.b(x))
    prod_eit = -2 * dt * a * q
    phi_xy = _phi_values(model, phi, x) + dt * q
    return EITRelaxation(t, x, y, phi_xy, flux, prod_cit, prod_eit, flux + prod_cit + prod_eit, a)


def eit_linearization(model: ModelSpec, phi, x_star, delta_t: float, alpha: float = 0.0):
    """Jacobian of the relaxation system at ``(x_star, 0)`` and its eigenvalues.

    At ``y = 0`` only ``db/dx``, ``2 D``, the Hessian of ``phi`` and the
    scalar ``tr(db/dx) / 2 - alpha`` survive.
    """
    x = model.points(x_star).reshape(model.dim)
    n = model.dim
    J = np.zeros((2 * n, 2 * n))
    J[:n, :n] = model.jac_b(x)
    J[:n, n:] = 2 * model.D(x)
    hess = _fd_vector_jacobian(lambda z: _grad(model, phi, z), x)
    J[n:, :n] = -0.5 * (hess + hess.T) / delta_t
    J[n:, n:] = (0.5 * np.trace(model.jac_b(x)) - alpha) * np.eye(n)
    return J, np.linalg.eigvals(J)


def fixed_surface_momentum(model: ModelSpec, phi, x, delta_t: float) -> np.ndarray:
    """Momentum on the surface ``dy/dt = 0`` of the 1-d system with ``alpha = 0``.

    Solves ``D'(x) y^2 + b'(x) y / 2 - phi'(x) / delta_t = 0`` and keeps the root
    that stays finite as ``D' -> 0`` (``y = 2 phi' / (delta_t b')`` for
    constant ``D``).
    """
    if model.dim != 1:
        raise DimUnsupported("the fixed-surface momentum is defined for 1-d models")
    x = model.points(x)
    a = model.dD(x)[..., 0, 0, 0]
    B = 0.5 * model.jac_b(x)[..., 0, 0]
    C = _grad(model, phi, x)[..., 0] / delta_t
    disc = B ** 2 + 4 * a * C
    if np.any(disc < 0):
        raise InvalidParam("no real fixed-surface momentum at some x")
    sgn = np.where(B >= 0, 1.0, -1.0)
    denom = B + sgn * np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(denom != 0, 2 * C / np.where(denom != 0, denom, 1.0), 0.0)
    if np.any((denom == 0) & (C != 0)):
        raise InvalidParam("fixed surface degenerate (b' = D' = 0 with nonzero gradient)")
    return y


# -- steady state ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NessDiagnostics:
    x_star: np.ndarray
    y_star: np.ndarray
    steady_flux: np.ndarray
    phi_min: float

    @property
    def detailed_balance_at_min(self) -> bool:
        return bool(np.all(np.abs(self.steady_flux) <= 1e-10))


def ness_diagnostics(model: ModelSpec, phi=None, grid: Grid | None = None, tol: float = 1e-8) -> NessDiagnostics:
    """Global minimizers of ``phi(x, y; delta_t)`` and the steady flux ``b(x*)`` there.

    The minimum over ``y`` is always at ``y = 0``. Position minimizers come from
    a grid search (the phi grid, else the model's validation grid); with an
    analytic rate function each grid minimizer is refined locally. All
    minimizers within ``tol`` of the global minimum are returned (rows of
    ``x_star``).
    """
    if isinstance(phi, GriddedField):
        grid = phi.grid
    grid = grid or model.validation_grid()
    pts = grid.points()
    vals = np.asarray(_phi_values(model, phi, pts)).reshape(-1)
    # grid-local minima: no neighbour lower
    shaped = vals.reshape(grid.shape)
    is_min = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        for shift in (1, -1):
            nb = np.roll(shaped, shift, axis=ax)
            edge = [slice(None)] * grid.dim
            edge[ax] = 0 if shift == 1 else -1
            nb[tuple(edge)] = np.inf
            is_min &= shaped <= nb
    cands = pts[is_min.reshape(-1)]
    cvals = vals[is_min.reshape(-1)]
    if phi is None:
        refined = []
        for c in cands:
            r = minimize(lambda z: float(model.phi(z)), c, jac=lambda z: model.grad_phi(z).reshape(-1),
                         method="BFGS", options={"gtol": 1e-12})
            refined.append(r.x)
        cands = np.array(refined).reshape(-1, model.dim)
        cvals = np.asarray(model.phi(cands)).reshape(-1)
    best = float(cvals.min())
    keep = cvals <= best + tol * max(1.0, abs(best))
    xs = cands[keep]
    uniq = []
    for c in xs:
        if not any(np.linalg.norm(c - u) < 1e-6 for u in uniq):
            uniq.append(c)
    xs = np.array(uniq)
    if phi is None:
        flux = model.gamma(xs)
    else:
        flux = model.b(xs) + np.einsum("...ij,...j->...i", model.D(xs), _grad(model, phi, xs))
    return NessDiagnostics(xs, np.zeros_like(xs), flux, best)
