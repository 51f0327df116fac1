"""
Finite-volume Fokker-Planck solver in one and two dimensions.

The forward equation is written in flux form,

    dp/dt = -div F,   F = (b - eps div D) p - eps D grad p,

with no-flux walls on a truncated box. Fluxes through faces normal to axis
``a`` use Chang-Cooper exponential fitting (the Scharfetter-Gummel form):

    F = (C / h) [B(-w) p_k - B(w) p_{k+1}],   w = h v / C,   B(z) = z / (e^z - 1),

with ``v`` the effective drift and ``C = eps D_aa`` at the face. The resulting
generator is an M-matrix with zero column sums, so mass is conserved to
round-off, explicit steps below ``1 / max|A_kk|`` keep densities nonnegative,
and a detailed-balance stationary state has exactly vanishing face fluxes.
Off-diagonal diffusion, when present, enters through central differences.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DimUnsupported, InvalidParam, NoConvergence, UnstableStep
from .grid import DensityEstimate, Grid
from .models import ModelSpec

__all__ = [
    "FPEConfig",
    "FluxField",
    "fpe_operator",
    "explicit_step_bound",
    "evolve_fpe",
    "stationary_density",
    "probability_flux",
    "scheme_flux",
    "near_delta",
    "boundary_mass_estimate",
]


@dataclass(frozen=True)
class FPEConfig:
    """Solver settings.

    ``time_step=None`` picks ``0.9 / max|A_kk|`` for explicit stepping and
    ``1.0`` for implicit (backward Euler) stepping.
    """

    grid: Grid
    epsilon: float
    time_step: float | None = None
    method: str = "explicit"
    boundary: str = "no-flux"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidParam(f"epsilon must be > 0, got {self.epsilon}")
        if self.time_step is not None and not self.time_step > 0:
            raise InvalidParam(f"time_step must be > 0, got {self.time_step}")
        if self.method not in ("explicit", "implicit"):
            raise InvalidParam(f"method must be 'explicit' or 'implicit', got {self.method!r}")
        if self.boundary != "no-flux":
            raise InvalidParam("only no-flux boundaries are supported")
        if self.grid.dim not in (1, 2):
            raise DimUnsupported(f"FPE solver supports dimensions 1 and 2, not {self.grid.dim}")


def _bernoulli(z):
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = np.abs(z) > 1e-12
    out[nz] = z[nz] / np.expm1(z[nz])
    return out


def _faces(grid: Grid, axis: int):
    """Flat indices of the left/right node of every face normal to ``axis`` and the face centres."""
    idx = np.arange(grid.size).reshape(grid.shape)
    left = np.take(idx, np.arange(grid.shape[axis] - 1), axis=axis).ravel()
    right = np.take(idx, np.arange(1, grid.shape[axis]), axis=axis).ravel()
    pts = grid.points()
    mid = 0.5 * (pts[left] + pts[right])
    return left, right, mid


def _face_coefficients(model, eps, grid, axis):
    """Per face: (left, right, coef on p_left, coef on p_right, D at face) for F / h."""
    left, right, mid = _faces(grid, axis)
    h = grid.spacing[axis]
    D = model.D(mid)
    v = model.b(mid)[:, axis]
    if not model.constant_diffusion:
        v = v - eps * model.div_D(mid)[:, axis]
    C = eps * D[:, axis, axis]
    w = h * v / C
    c_left = C / h ** 2 * _bernoulli(-w)
    c_right = C / h ** 2 * _bernoulli(w)
    return left, right, c_left, c_right, D


def _check_dims(model, grid):
    if model.dim not in (1, 2):
        raise DimUnsupported(f"FPE solver supports dimensions 1 and 2, not {model.dim}")
    if grid.dim != model.dim:
        raise InvalidParam(f"grid dimension {grid.dim} != model dimension {model.dim}")


def fpe_operator(model: ModelSpec, epsilon: float, grid: Grid) -> sp.csr_matrix:
    """Sparse generator ``A`` with ``dp/dt = A p`` on flattened node values."""
    _check_dims(model, grid)
    n = grid.size
    rows, cols, vals = [], [], []
    for axis in range(grid.dim):
        left, right, cl, cr, D = _face_coefficients(model, epsilon, grid, axis)
        # F/h = cl p_left - cr p_right leaves `left`, enters `right`
        rows += [left, left, right, right]
        cols += [left, right, left, right]
        vals += [-cl, cr, cl, -cr]
        if grid.dim == 2:
            other = 1 - axis
            Dab = D[:, axis, other]
            if np.any(Dab != 0):
                r, c, v = _cross_terms(grid, axis, other, left, right, epsilon * Dab)
                rows += r
                cols += c
                vals += v
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return A.tocsr()


def _cross_stencil(grid, axis, other, left, right, eD):
    """Face flux ``-eps D_ab d_b p`` as ``sum g * (p[up] - p[dn])`` over the two adjacent nodes.

    Returns a list of ``(up, dn, g)`` index/weight arrays, one entry per node.
    """
    shape = grid.shape
    h_b = grid.spacing[other]
    terms = []
    for node in (left, right):
        multi = np.array(np.unravel_index(node, shape))
        up = multi.copy()
        dn = multi.copy()
        up[other] = np.minimum(up[other] + 1, shape[other] - 1)
        dn[other] = np.maximum(dn[other] - 1, 0)
        span = (up[other] - dn[other]) * h_b
        g = -eD * 0.5 / span
        terms.append((np.ravel_multi_index(tuple(up), shape), np.ravel_multi_index(tuple(dn), shape), g))
    return terms


def _cross_terms(grid, axis, other, left, right, eD):
    h_a = grid.spacing[axis]
    rows, cols, vals = [], [], []
    for up, dn, g in _cross_stencil(grid, axis, other, left, right, eD):
        for target, sign in ((left, -1.0), (right, 1.0)):
            rows += [target, target]
            cols += [up, dn]
            vals += [sign * g / h_a, -sign * g / h_a]
    return rows, cols, vals


def explicit_step_bound(A) -> float:
    """Largest explicit Euler step that keeps ``I + dt A`` entrywise nonnegative."""
    return 1.0 / float(np.max(np.abs(A.diagonal())))


def boundary_mass_estimate(model: ModelSpec, grid: Grid, epsilon: float) -> float | None:
    """Probability carried by the outermost cells under the analytic stationary law, if known."""
    if not model.has_phi:
        return None
    phi = model.phi(grid.mesh())
    w = np.exp(-(phi - phi.min()) / epsilon)
    w /= w.sum()
    border = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[axis] = 0
        border[tuple(sl)] = True
        sl[axis] = -1
        border[tuple(sl)] = True
    return float(w[border].sum())


def near_delta(grid: Grid, x0, epsilon: float, cells: float = 2.0) -> DensityEstimate:
    """Grid-representable stand-in for a point mass: Gaussian with std ``cells`` grid spacings."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    cov = np.diag((cells * grid.spacing) ** 2)
    return DensityEstimate.gaussian(grid, x0, cov, epsilon)


class _Stepper:
    def __init__(self, A, method, dt):
        self.A = A
        self.method = method
        self.dt = dt
        if method == "implicit":
            n = A.shape[0]
            self.lu = splu((sp.identity(n, format="csc") - dt * A).tocsc())

    def __call__(self, p):
        if self.method == "explicit":
            return p + self.dt * (self.A @ p)
        return self.lu.solve(p)


def _resolve_step(cfg, A, t_final=None):
    bound = explicit_step_bound(A)
    if cfg.method == "explicit":
        dt = 0.9 * bound if cfg.time_step is None else cfg.time_step
        if dt > bound * (1 + 1e-12):
            raise UnstableStep(f"time_step {dt:.3g} exceeds explicit stability bound {bound:.3g}")
    else:
        dt = 1.0 if cfg.time_step is None else cfg.time_step
    if t_final is not None:
        n = max(1, int(np.ceil(t_final / dt - 1e-9)))
        dt = t_final / n
        return dt, n, bound
    return dt, None, bound


def _check_box(model, grid, eps):
    est = boundary_mass_estimate(model, grid, eps)
    if est is not None and est > 1e-10:
        warnings.warn(f"analytic boundary mass {est:.2e} > 1e-10; enlarge the box", RuntimeWarning,
                      stacklevel=3)
    return est


def evolve_fpe(model: ModelSpec, cfg: FPEConfig, p0: DensityEstimate, t_final: float) -> DensityEstimate:
    """Advance ``p0`` by ``t_final``.

    The step is shrunk so that an integer number of steps lands exactly on
    ``t_final``; when ``t_final`` is a multiple of ``cfg.time_step`` the step is
    used unchanged, which makes successive calls compose exactly.

    Raises
    ------
    UnstableStep
        Step above the explicit bound, mass drift above ``1e-8`` per unit time,
        or a negative density value.
    """
    if p0.grid != cfg.grid:
        raise InvalidParam("initial density must live on the solver grid")
    if not t_final >= 0:
        raise InvalidParam("t_final must be >= 0")
    A = fpe_operator(model, cfg.epsilon, cfg.grid)
    box = _check_box(model, cfg.grid, cfg.epsilon)
    p = p0.values.reshape(-1).copy()
    m0 = p.sum() * cfg.grid.cell_volume
    if t_final == 0:
        return DensityEstimate(cfg.grid, p0.values.copy(), cfg.epsilon, p0.time, dict(p0.meta))
    dt, n, bound = _resolve_step(cfg, A, t_final)
    step = _Stepper(A, cfg.method, dt)
    for _ in range(n):
        p = step(p)
    mass = p.sum() * cfg.grid.cell_volume
    drift = abs(mass - m0)
    if drift > 1e-8 * max(1.0, t_final):
        raise UnstableStep(f"mass drifted by {drift:.3g} over t={t_final}")
    if p.min() < -1e-14 * np.abs(p).max():
        raise UnstableStep(f"negative density {p.min():.3g}")
    p = np.maximum(p, 0.0)
    meta = {"steps": n, "dt": dt, "method": cfg.method, "mass_drift": drift,
            "explicit_bound": bound, "boundary_mass": box}
    return DensityEstimate(cfg.grid, p.reshape(cfg.grid.shape), cfg.epsilon, p0.time + t_final, meta)


def stationary_density(model: ModelSpec, cfg: FPEConfig, p0: DensityEstimate | None = None,
                       tol: float = 1e-10, max_steps: int = 200000) -> DensityEstimate:
    """Time-step until the L1 change per step drops below ``tol``.

    Starts from the uniform density unless ``p0`` is given.

    Raises
    ------
    NoConvergence
        ``max_steps`` exhausted; ``exc.result`` holds the last iterate.
    """
    grid = cfg.grid
    A = fpe_operator(model, cfg.epsilon, grid)
    box = _check_box(model, grid, cfg.epsilon)
    dt, _, bound = _resolve_step(cfg, A)
    step = _Stepper(A, cfg.method, dt)
    vol = grid.cell_volume
    if p0 is None:
        p = np.full(grid.size, 1.0 / (grid.size * vol))
    else:
        p = p0.normalized().values.reshape(-1).copy()
    change = np.inf
    for k in range(1, max_steps + 1):
        new = step(p)
        new /= new.sum() * vol
        change = np.abs(new - p).sum() * vol
        p = new
        if change < tol:
            break
    meta = {"steps": k, "dt": dt, "method": cfg.method, "l1_change": change,
            "explicit_bound": bound, "boundary_mass": box}
    dens = DensityEstimate(grid, np.maximum(p, 0).reshape(grid.shape), cfg.epsilon, np.inf, meta)
    if change >= tol:
        raise NoConvergence(f"stationary solve stalled at L1 change {change:.3g} after {max_steps} steps",
                            result=dens)
    return dens


def scheme_flux(model: ModelSpec, epsilon: float, p: DensityEstimate) -> list:
    """Conservative face fluxes used by the solver, one array per axis.

    Array ``a`` has the grid shape with one fewer entry along axis ``a``.
    """
    grid = p.grid
    _check_dims(model, grid)
    flat = p.values.reshape(-1)
    out = []
    for axis in range(grid.dim):
        left, right, cl, cr, D = _face_coefficients(model, epsilon, grid, axis)
        h = grid.spacing[axis]
        F = h * (cl * flat[left] - cr * flat[right])
        if grid.dim == 2 and np.any(D[:, axis, 1 - axis] != 0):
            for up, dn, g in _cross_stencil(grid, axis, 1 - axis, left, right,
                                            epsilon * D[:, axis, 1 - axis]):
                F = F + g * (flat[up] - flat[dn])
        shape = list(grid.shape)
        shape[axis] -= 1
        out.append(F.reshape(shape))
    return out


@dataclass(frozen=True)
class FluxField:
    """Nodal probability flux ``J = b p - eps D grad p`` and Hill's net-flux limit.

    ``hill`` is ``(eps D)^{-1} b p - grad p``; ``identity_residual`` is
    ``max|J - eps D hill|``. ``interface_flux`` holds the solver's conservative
    face fluxes (see :func:`scheme_flux`).
    """

    grid: Grid
    J: np.ndarray
    hill: np.ndarray
    identity_residual: float
    scale: float
    interface_flux: list = field(default_factory=list)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.linalg.norm(self.J, axis=-1)))

    @property
    def max_interface(self) -> float:
        return float(max(np.max(np.abs(F)) for F in self.interface_flux))


def probability_flux(model: ModelSpec, epsilon: float, p: DensityEstimate) -> FluxField:
    """Nodal flux from central differences (one-sided at the walls)."""
    grid = p.grid
    if grid.dim != model.dim:
        raise InvalidParam(f"density dimension {grid.dim} != model dimension {model.dim}")
    x = grid.mesh()
    vals = p.values
    from .grid import GriddedField

    grad = GriddedField(grid, vals).gradient()
    b = model.b(x)
    eD = epsilon * model.D(x)
    bp = b * vals[..., None]
    J = bp - np.einsum("...ij,...j->...i", eD, grad)
    hill = np.linalg.solve(eD, bp[..., None])[..., 0] - grad
    recon = np.einsum("...ij,...j->...i", eD, hill)
    resid = float(np.max(np.abs(J - recon)))
    scale = float(max(np.max(np.abs(bp)), np.max(np.abs(J - bp)), 1e-300))
    if resid > 1e3 * np.finfo(float).eps * scale:
        raise ArithmeticError(f"J != eps D hill (residual {resid:.3g}, scale {scale:.3g})")
    faces = scheme_flux(model, epsilon, p) if grid.dim in (1, 2) else []
    return FluxField(grid, J, hill, resid, scale, faces)
