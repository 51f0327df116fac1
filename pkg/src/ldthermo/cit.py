"""
Classical irreversible thermodynamics from the stationary rate function.

The drift splits as ``b = -D grad(phi_ss) + gamma`` with ``gamma`` orthogonal
to ``grad(phi_ss)``. Consequences computed here:

* ``d phi_ss / dt = grad(phi_ss) . b <= 0`` along ``xdot = b``;
* the Pythagorean split of the entropy production rate

      b^T D^{-1} b = [D grad(phi)]^T D^{-1} [D grad(phi)] + gamma^T D^{-1} gamma
        (total)          (free-energy dissipation)          (house-keeping)

* Gibbs entropy of a gridded density and the mesoscopic, flux-aware entropy
  obtained by adding the differential entropy of the Gaussian short-time kernel.

Wherever a stationary rate function is expected, ``phi`` may be

``None``
    use the model's analytic ``phi_ss`` and its gradient;
:class:`GriddedField`
    node values of a numeric estimate (for example ``-eps ln p`` from the FPE
    solver); gradients are finite differences, interpolated off-node;
callable
    a function returning ``grad(phi)`` at ``(..., dim)`` points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DecompositionMismatch, InvalidParam, KernelInvalid, SingularDiffusion
from .grid import DensityEstimate, Grid, GriddedField
from .models import ModelSpec

__all__ = [
    "ORTHO_FLOOR",
    "potential_gradient",
    "phi_from_density",
    "DriftDecomposition",
    "drift_decomposition",
    "EPRBreakdown",
    "epr_breakdown",
    "lyapunov_rate",
    "gibbs_entropy",
    "EntropyReport",
    "meso_eit_entropy",
    "kernel_entropy",
    "uncertainty_product",
]

ORTHO_FLOOR = 1e-30
KERNEL_LIMIT = 0.1


def phi_from_density(density: DensityEstimate, floor: float = 0.0) -> GriddedField:
    """``-eps ln p`` shifted to minimum zero. Nodes with ``p <= floor`` are not allowed."""
    p = density.values
    if np.any(p <= floor):
        raise InvalidParam("density must be positive at every node to take -eps ln p")
    phi = -density.epsilon * np.log(p)
    return GriddedField(density.grid, phi - phi.min())


def _gridded_gradient(field: GriddedField, x):
    grid = field.grid
    grads = field.gradient()
    interp = RegularGridInterpolator(tuple(grid.axes), grads, method="linear", bounds_error=True)
    try:
        return interp(x.reshape(-1, grid.dim)).reshape(x.shape)
    except ValueError as exc:
        raise InvalidParam("evaluation points lie outside the phi grid") from exc


def potential_gradient(model: ModelSpec, phi, x) -> np.ndarray:
    """``grad(phi_ss)`` at points ``x`` for any accepted form of ``phi``."""
    x = model.points(x)
    if phi is None:
        return model.grad_phi(x)
    if isinstance(phi, GriddedField):
        if phi.grid.dim != model.dim:
            raise InvalidParam("phi grid and model dimensions differ")
        return _gridded_gradient(phi, x)
    if callable(phi):
        return np.asarray(phi(x), dtype=float).reshape(x.shape)
    raise InvalidParam("phi must be None, a GriddedField or a gradient callable")


def _default_points(model, phi, x):
    if x is not None:
        return model.points(x)
    if isinstance(phi, GriddedField):
        return phi.grid.mesh()
    return model.validation_grid().mesh()


def _check_spd(model, D):
    eig = np.linalg.eigvalsh(D)
    if np.any(eig[..., 0] <= 1e-14 * np.maximum(1.0, np.abs(eig[..., -1]))):
        raise SingularDiffusion(f"{model.name}: D(x) is singular")


@dataclass(frozen=True, eq=False)
class DriftDecomposition:
    points: np.ndarray
    grad_phi: np.ndarray
    gamma: np.ndarray
    orthogonality: np.ndarray

    @property
    def orthogonality_residual(self) -> float:
        return float(np.max(self.orthogonality))

    def residual_outside(self, center, radius: float) -> float:
        """Largest defect at points farther than ``radius`` from ``center``.

        Near a critical point both factors vanish and a gridded estimate of the
        ratio is dominated by discretization noise, so numeric checks skip a
        small ball around it.
        """
        dist = np.linalg.norm(self.points - np.asarray(center, dtype=float), axis=-1)
        keep = dist > radius
        if not np.any(keep):
            raise InvalidParam("no evaluation point lies outside the excluded ball")
        return float(np.max(self.orthogonality[keep]))


def drift_decomposition(model: ModelSpec, phi=None, x=None) -> DriftDecomposition:
    """``gamma = b + D grad(phi)`` and the normalized orthogonality defect.

    The defect at each point is ``|gamma . grad(phi)| / (|gamma| |grad(phi)| + 1e-30)``.
    With ``x`` omitted the evaluation points are the phi grid nodes (gridded
    input) or the model's validation grid.
    """
    x = _default_points(model, phi, x)
    D = model.D(x)
    _check_spd(model, D)
    g = potential_gradient(model, phi, x)
    gamma = model.b(x) + np.einsum("...ij,...j->...i", D, g)
    if phi is None and model.analytic_gamma is not None:
        gamma = model.gamma(x)
    dot = np.abs(np.einsum("...i,...i->...", gamma, g))
    norm = np.linalg.norm(gamma, axis=-1) * np.linalg.norm(g, axis=-1) + ORTHO_FLOOR
    return DriftDecomposition(x, g, gamma, dot / norm)


@dataclass(frozen=True, eq=False)
class EPRBreakdown:
    """Entropy production rates at each evaluation point (arrays, or scalars for one point)."""

    total: np.ndarray
    free_energy_dissipation: np.ndarray
    housekeeping: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.total - self.free_energy_dissipation - self.housekeeping

    @property
    def relative_residual(self) -> float:
        return float(np.max(np.abs(self.residual)) / max(float(np.max(np.abs(self.total))), ORTHO_FLOOR))

    def as_dict(self) -> dict:
        return {
            "total": np.asarray(self.total).tolist(),
            "free_energy_dissipation": np.asarray(self.free_energy_dissipation).tolist(),
            "housekeeping": np.asarray(self.housekeeping).tolist(),
        }


def epr_breakdown(model: ModelSpec, phi=None, x=None, tol: float | None = None) -> EPRBreakdown:
    """Total, free-energy-dissipation and house-keeping entropy production rates.

    Parameters
    ----------
    tol : float, optional
        Absolute bound on ``|total - dissipation - housekeeping|`` relative to
        ``max(1, |total|)``. Defaults to ``1e-10`` for analytic or callable
        ``phi``; gridded input is not checked unless ``tol`` is given.

    Raises
    ------
    DecompositionMismatch
        The Pythagorean identity fails beyond ``tol``.
    SingularDiffusion
    """
    single = x is not None and np.ndim(x) <= 1 and model.points(x).shape == (model.dim,)
    dec = drift_decomposition(model, phi, x)
    x = dec.points
    D = model.D(x)
    M = np.linalg.inv(D)
    b = model.b(x)
    total = np.einsum("...i,...ij,...j->...", b, M, b)
    Dg = np.einsum("...ij,...j->...i", D, dec.grad_phi)
    diss = np.einsum("...i,...i->...", dec.grad_phi, Dg)
    hk = np.einsum("...i,...ij,...j->...", dec.gamma, M, dec.gamma)
    if tol is None and not isinstance(phi, GriddedField):
        tol = 1e-10
    if tol is not None:
        bad = np.abs(total - diss - hk) > tol * np.maximum(1.0, np.abs(total))
        if np.any(bad):
            worst = float(np.max(np.abs(total - diss - hk)))
            raise DecompositionMismatch(f"{model.name}: entropy production split off by {worst:.3g}")
    if single:
        total, diss, hk = float(total), float(diss), float(hk)
    return EPRBreakdown(total, diss, hk)


def lyapunov_rate(model: ModelSpec, phi=None, x=None):
    """``d phi_ss / dt = grad(phi_ss) . b`` along the deterministic flow."""
    x = model.points(x) if x is not None else _default_points(model, phi, x)
    val = np.einsum("...i,...i->...", potential_gradient(model, phi, x), model.b(x))
    return float(val) if np.ndim(val) == 0 else val


def gibbs_entropy(p: DensityEstimate) -> float:
    """Differential entropy ``-sum p ln p`` times the cell volume; zero nodes contribute 0."""
    v = p.values
    pos = v > 0
    return float(-np.sum(v[pos] * np.log(v[pos])) * p.grid.cell_volume)


def kernel_entropy(model: ModelSpec, epsilon: float, delta_t: float, x) -> np.ndarray:
    """Differential entropy of the Gaussian short-time kernel started at ``x``.

    The kernel has covariance ``2 eps delta_t D(x)``, so its entropy is
    ``n/2 (1 + ln(4 pi eps delta_t)) + ln det D(x) / 2``.
    """
    x = model.points(x)
    n = model.dim
    _, logdet = np.linalg.slogdet(model.D(x))
    return 0.5 * n * (1 + np.log(4 * np.pi * epsilon * delta_t)) + 0.5 * logdet


@dataclass(frozen=True)
class EntropyReport:
    s_cit: float
    s_meso_eit: float
    difference: float
    ds_cit_dt_flux: float
    ds_cit_dt_production: float
    delta_t: float
    epsilon: float

    @property
    def ds_cit_dt(self) -> float:
        return self.ds_cit_dt_flux + self.ds_cit_dt_production

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in
                ("s_cit", "s_meso_eit", "difference", "ds_cit_dt_flux", "ds_cit_dt_production",
                 "delta_t", "epsilon")}


def meso_eit_entropy(model: ModelSpec, epsilon: float, p: DensityEstimate, delta_t: float) -> EntropyReport:
    """Gibbs entropy, flux-aware mesoscopic entropy and the Gibbs entropy rate split.

    ``s_meso_eit = s_cit + E_p[kernel entropy]``. The rate of ``s_cit`` under
    the forward equation splits as

        flux       = -int b . grad(p) dx
        production =  int grad(p)^T eps D grad(p) / p dx   (>= 0)

    (exact for constant ``D``; nodes with ``p = 0`` are skipped).

    Raises
    ------
    KernelInvalid
        ``delta_t * max ||db/dx||_2`` over the grid exceeds 0.1.
    """
    if not (epsilon > 0 and delta_t > 0):
        raise InvalidParam("epsilon and delta_t must be positive")
    grid = p.grid
    if grid.dim != model.dim:
        raise InvalidParam("density grid and model dimensions differ")
    x = grid.mesh()
    stiff = float(np.max(np.linalg.norm(model.jac_b(x), ord=2, axis=(-2, -1))))
    if delta_t * stiff > KERNEL_LIMIT:
        raise KernelInvalid(f"delta_t * max|db/dx| = {delta_t * stiff:.3g} exceeds {KERNEL_LIMIT}")
    p = p.normalized()
    dv = grid.cell_volume
    s_cit = gibbs_entropy(p)
    diff = float(np.sum(p.values * kernel_entropy(model, epsilon, delta_t, x)) * dv)
    grad_p = GriddedField(grid, p.values).gradient()
    flux = -float(np.sum(np.einsum("...i,...i->...", model.b(x), grad_p)) * dv)
    pos = p.values > 0
    quad = np.einsum("...i,...ij,...j->...", grad_p, epsilon * model.D(x), grad_p)
    prod = float(np.sum(quad[pos] / p.values[pos]) * dv)
    return EntropyReport(s_cit, s_cit + diff, diff, flux, prod, float(delta_t), float(epsilon))


def uncertainty_product(epsilon: float, delta_t: float) -> float:
    """``eps / delta_t``, the noise level per unit of time resolution."""
    if not (epsilon > 0 and delta_t > 0):
        raise InvalidParam("epsilon and delta_t must be positive")
    return epsilon / delta_t
