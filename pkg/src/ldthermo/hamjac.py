"""
Hamiltonian and Lagrangian structure of the small-noise limit.

With momentum ``y = grad(phi)`` the rate function obeys a Hamilton-Jacobi
equation with

    H(x, y) = y^T D(x) y + y^T b(x),
    L(x, xdot) = (xdot - b)^T D^{-1} (xdot - b) / 4,

related by ``y = D^{-1}(xdot - b) / 2`` and ``L = xdot . y - H``. Index
conventions for the characteristic equations (repeated indices summed):

    dx_i/dt = 2 D_ij y_j + b_i
    dy_i/dt = -y_j (dD_jk/dx_i) y_k - y_j (db_j/dx_i)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._integrate import rk4
from .errors import InvalidParam, NotDetailedBalance, SingularDiffusion
from .grid import Grid, GriddedField
from .models import ModelSpec, _fd_scalar_gradient, _fd_vector_jacobian, _fd_matrix_derivative

__all__ = [
    "hamiltonian",
    "lagrangian",
    "hamiltonian_vector_field",
    "PhaseTrajectory",
    "integrate_hamiltonian",
    "CanonicalForm",
    "canonical_transform",
    "integrate_canonical",
    "LorentzSplit",
    "lorentz_power",
    "hje_residual",
    "stationary_hje_residual",
]


def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def _quad(v, M, w):
    return np.einsum("...i,...ij,...j->...", v, M, w)


def _solve_D(model, x, rhs):
    D = model.D(x)
    eig = np.linalg.eigvalsh(D)
    if np.any(eig[..., 0] <= 1e-14 * np.maximum(1.0, np.abs(eig[..., -1]))):
        raise SingularDiffusion(f"{model.name}: D(x) is singular at some evaluation point")
    return np.linalg.solve(D, rhs[..., None])[..., 0]


def hamiltonian(model: ModelSpec, x, y) -> np.ndarray:
    """``H = y^T D y + y^T b``, vectorized over leading axes."""
    x = model.points(x)
    y = model.points(y)
    return _quad(y, model.D(x), y) + np.einsum("...i,...i->...", y, model.b(x))


def lagrangian(model: ModelSpec, x, xdot):
    """Return ``(L, y)`` with ``y = D^{-1}(xdot - b) / 2``."""
    x = model.points(x)
    xdot = model.points(xdot)
    u = xdot - model.b(x)
    y = 0.5 * _solve_D(model, x, u)
    return 0.5 * np.einsum("...i,...i->...", u, y), y


def hamiltonian_vector_field(model: ModelSpec, x, y):
    """``(dx/dt, dy/dt)`` of the characteristic system."""
    x = model.points(x)
    y = model.points(y)
    dx = 2 * _mv(model.D(x), y) + model.b(x)
    # dD[..., j, k, i] = dD_jk/dx_i ; J[..., j, i] = db_j/dx_i
    dy = -np.einsum("...j,...jki,...k->...i", y, model.dD(x), y) - np.einsum("...j,...ji->...i", y, model.jac_b(x))
    return dx, dy


@dataclass(frozen=True)
class PhaseTrajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    H: np.ndarray

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.H - self.H[0])))


def integrate_hamiltonian(model: ModelSpec, x0, y0, T: float, h: float, bound: float = 1e6) -> PhaseTrajectory:
    """RK4 integration of the characteristics from ``(x0, y0)`` over ``[0, T]``.

    Raises
    ------
    BlowUp
        Any coordinate exceeds ``bound``.
    """
    n = model.dim
    z0 = np.concatenate([model.points(x0).reshape(n), model.points(y0).reshape(n)])

    def rhs(z):
        dx, dy = hamiltonian_vector_field(model, z[:n], z[n:])
        return np.concatenate([dx.reshape(n), dy.reshape(n)])

    t, z = rk4(rhs, z0, T, h, bound)
    x, y = z[:, :n], z[:, n:]
    return PhaseTrajectory(t, x, y, hamiltonian(model, x, y))


# -- detailed balance: canonical form -----------------------------------------

@dataclass(frozen=True, eq=False)
class CanonicalForm:
    """Even-in-momentum Hamiltonian ``pD(q)p + V(q)`` of a detailed-balance model.

    ``p = y - grad(phi_eq)/2`` and ``V = -grad(phi_eq)^T D grad(phi_eq) / 4``;
    for such models ``grad(phi_eq) = -D^{-1} b`` exactly.
    """

    model: ModelSpec

    def grad_phi_eq(self, x) -> np.ndarray:
        x = self.model.points(x)
        return -_solve_D(self.model, x, self.model.b(x))

    def momentum_shift(self, x) -> np.ndarray:
        return 0.5 * self.grad_phi_eq(x)

    def potential(self, q) -> np.ndarray:
        q = self.model.points(q)
        g = self.grad_phi_eq(q)
        return -0.25 * _quad(g, self.model.D(q), g)

    def grad_potential(self, q) -> np.ndarray:
        return _fd_scalar_gradient(self.potential, self.model.points(q))

    def hamiltonian(self, q, p) -> np.ndarray:
        q = self.model.points(q)
        p = self.model.points(p)
        return _quad(p, self.model.D(q), p) + self.potential(q)

    def to_canonical(self, x, y):
        return self.model.points(x), self.model.points(y) - self.momentum_shift(x)

    def from_canonical(self, q, p):
        return self.model.points(q), self.model.points(p) + self.momentum_shift(q)


def canonical_transform(model: ModelSpec, grid: Grid | None = None, tol: float = 1e-8) -> CanonicalForm:
    """Canonical form of a detailed-balance model.

    Detailed balance is checked on ``grid`` (the model's validation grid by
    default): via ``max|gamma| <= tol`` when the model has an analytic
    circulation, otherwise by symmetry of the Jacobian of ``D^{-1} b``
    (curl-free) to a finite-difference tolerance.

    Raises
    ------
    NotDetailedBalance
    """
    grid = grid or model.validation_grid()
    x = grid.points()
    if model.analytic_gamma is not None:
        g = float(np.max(np.abs(model.gamma(x))))
        if g > tol:
            raise NotDetailedBalance(f"{model.name}: max|gamma| = {g:.3g} on the validation grid")
    elif model.dim > 1:
        force = lambda z: _solve_D(model, z, model.b(z))  # noqa: E731
        J = _fd_vector_jacobian(force, x)
        asym = np.max(np.abs(J - np.swapaxes(J, -1, -2)))
        scale = max(1.0, float(np.max(np.abs(J))))
        if asym > 1e-6 * scale:
            raise NotDetailedBalance(f"{model.name}: D^-1 b is not a gradient (curl {asym:.3g})")
    return CanonicalForm(model)


def integrate_canonical(form: CanonicalForm, q0, p0, T: float, h: float, bound: float = 1e6) -> PhaseTrajectory:
    """RK4 flow of the canonical Hamiltonian; ``H`` column holds ``H~(q, p)``."""
    model = form.model
    n = model.dim
    z0 = np.concatenate([model.points(q0).reshape(n), model.points(p0).reshape(n)])

    def rhs(z):
        q, p = z[:n], z[n:]
        dq = 2 * model.D(q).reshape(n, n) @ p
        dD = model.dD(q).reshape(n, n, n)
        dp = -np.einsum("j,jki,k->i", p, dD, p) - form.grad_potential(q).reshape(n)
        return np.concatenate([dq, dp])

    t, z = rk4(rhs, z0, T, h, bound)
    q, p = z[:, :n], z[:, n:]
    return PhaseTrajectory(t, q, p, form.hamiltonian(q, p))


# -- Lorentz-force structure ---------------------------------------------------

@dataclass(frozen=True)
class LorentzSplit:
    """Force terms of the Euler-Lagrange equation ``D^{-1} xddot = potential + lorentz1 + lorentz2``."""

    potential_force: np.ndarray
    lorentz1: np.ndarray
    lorentz2: np.ndarray
    potential_accel: np.ndarray
    acceleration: np.ndarray
    lorentz_power: np.ndarray


def lorentz_power(model: ModelSpec, x, xdot) -> LorentzSplit:
    """Split the Euler-Lagrange force into potential and two magnetic-like parts.

    With ``M = D^{-1}`` (indices summed):

        potential_i = d_i [b_j M_jk b_k - xdot_j M_jk xdot_k] / 2
        lorentz1_i  = xdot_k d_k (M b)_i - xdot_j d_i (M b)_j
        lorentz2_i  = -xdot_k d_k M_ij xdot_j + xdot_j d_i M_jk xdot_k

    ``lorentz_power = xdot . (lorentz1 + lorentz2)`` vanishes identically.
    """
    x = model.points(x)
    xdot = model.points(xdot)
    D = model.D(x)
    eig = np.linalg.eigvalsh(D)
    if np.any(eig[..., 0] <= 1e-14 * np.maximum(1.0, np.abs(eig[..., -1]))):
        raise SingularDiffusion(f"{model.name}: D(x) is singular")
    M = np.linalg.inv(D)
    b = model.b(x)
    Jb = model.jac_b(x)
    if model.constant_diffusion:
        dM = np.zeros(x.shape + (model.dim, model.dim))
        JMb = M @ Jb
    else:
        dM = _fd_matrix_derivative(lambda z: np.linalg.inv(model.D(z)), x)  # dM[..., i, j, k] = dM_ij/dx_k
        JMb = _fd_vector_jacobian(lambda z: _mv(np.linalg.inv(model.D(z)), model.b(z)), x)
    Mb = _mv(M, b)
    grad_bMb = 2 * np.einsum("...ji,...j->...i", Jb, Mb) + np.einsum("...j,...jki,...k->...i", b, dM, b)
    grad_vMv = np.einsum("...j,...jki,...k->...i", xdot, dM, xdot)
    potential = 0.5 * (grad_bMb - grad_vMv)
    lorentz1 = np.einsum("...ik,...k->...i", JMb, xdot) - np.einsum("...ji,...j->...i", JMb, xdot)
    lorentz2 = (-np.einsum("...k,...ijk,...j->...i", xdot, dM, xdot)
                + np.einsum("...j,...jki,...k->...i", xdot, dM, xdot))
    power = np.einsum("...i,...i->...", xdot, lorentz1 + lorentz2)
    return LorentzSplit(potential, lorentz1, lorentz2, _mv(D, potential),
                        _mv(D, potential + lorentz1 + lorentz2), power)


# -- Hamilton-Jacobi residuals -------------------------------------------------

def hje_residual(model: ModelSpec, grid: Grid, phi, phi_t=None) -> np.ndarray:
    """Nodewise ``dphi/dt + grad(phi)^T D grad(phi) + grad(phi)^T b``.

    ``phi`` holds node values (or a :class:`GriddedField`); ``phi_t`` the time
    derivative at the nodes, omitted for the stationary equation.
    """
    field = phi if isinstance(phi, GriddedField) else GriddedField(grid, phi)
    if field.grid.dim != model.dim:
        raise InvalidParam("grid and model dimensions differ")
    x = field.grid.mesh()
    g = field.gradient()
    res = _quad(g, model.D(x), g) + np.einsum("...i,...i->...", g, model.b(x))
    if phi_t is not None:
        res = res + np.asarray(phi_t, dtype=float)
    return res


def stationary_hje_residual(model: ModelSpec, grad_phi: Callable | None, x) -> np.ndarray:
    """``grad(phi)^T (D grad(phi) + b)`` from an analytic gradient (the model's own by default)."""
    x = model.points(x)
    g = model.grad_phi(x) if grad_phi is None else np.asarray(grad_phi(x), dtype=float).reshape(x.shape)
    return np.einsum("...i,...i->...", g, _mv(model.D(x), g) + model.b(x))
