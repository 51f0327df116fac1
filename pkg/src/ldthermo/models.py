"""
Dynamical models ``dx = b(x) dt + sqrt(2 eps D(x)) dB``.

A :class:`ModelSpec` bundles a vectorized drift and diffusion with optional
analytic references: the stationary rate function ``phi_ss`` (stored so that its
minimum over the model's domain is 0), its gradient, and the circulation
``gamma = b + D grad(phi_ss)``. All callables take points shaped ``(..., dim)``.

Derivatives that a model does not supply analytically are taken by central
finite differences with step ``1e-5 * max(1, |x|)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Optional

import numpy as np

from .errors import (
    DecompositionMismatch,
    DegenerateDiffusion,
    InvalidParam,
    UnknownModel,
)
from .expressions import Expression
from .grid import Grid

__all__ = [
    "ModelSpec",
    "ValidationReport",
    "BUILTIN_MODELS",
    "builtin_model",
    "custom_model",
    "model_from_config",
    "validate_model",
    "fd_step",
]

BUILTIN_MODELS = ("ou1d", "linear2d", "doublewell1d", "custom")
VALIDATION_NODES = 41

_ALIASES = {"κ": "kappa", "ω": "omega", "k": "kappa", "w": "omega"}


def fd_step(x) -> np.ndarray:
    """Finite-difference step used for every numeric derivative: ``1e-5 * max(1, |x|)``."""
    return 1e-5 * np.maximum(1.0, np.abs(np.asarray(x, dtype=float)))


def as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != dim:
        raise InvalidParam(f"expected points with last axis {dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidParam("state vectors must be finite")
    return x


def _fd_vector_jacobian(fn, x):
    """J[..., i, j] = d fn_i / d x_j for a vector field, by central differences."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = []
    for j in range(n):
        h = fd_step(x[..., j])
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += h
        xm[..., j] -= h
        cols.append((fn(xp) - fn(xm)) / (2 * h[..., None]))
    return np.stack(cols, axis=-1)


def _fd_matrix_derivative(fn, x):
    """dM[..., i, j, k] = d fn_ij / d x_k for a matrix field."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = []
    for k in range(n):
        h = fd_step(x[..., k])
        xp = x.copy()
        xm = x.copy()
        xp[..., k] += h
        xm[..., k] -= h
        out.append((fn(xp) - fn(xm)) / (2 * h[..., None, None]))
    return np.stack(out, axis=-1)


def _fd_scalar_gradient(fn, x):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = []
    for k in range(n):
        h = fd_step(x[..., k])
        xp = x.copy()
        xm = x.copy()
        xp[..., k] += h
        xm[..., k] -= h
        out.append((fn(xp) - fn(xm)) / (2 * h))
    return np.stack(out, axis=-1)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Immutable description of a Langevin model.

    ``drift_jacobian`` returns ``J[..., i, j] = db_i/dx_j`` and
    ``diffusion_derivative`` returns ``dD[..., i, j, k] = dD_ij/dx_k``.
    ``domain`` is a pair of bound tuples used for validation and for
    shift-normalizing rate functions.
    """

    name: str
    dim: int
    drift: Callable
    diffusion: Callable
    analytic_phi_ss: Optional[Callable] = None
    analytic_gamma: Optional[Callable] = None
    grad_phi_ss: Optional[Callable] = None
    drift_jacobian: Optional[Callable] = None
    diffusion_derivative: Optional[Callable] = None
    constant_diffusion: bool = False
    params: dict = field(default_factory=dict)
    domain: tuple = ((-1.0,), (1.0,))
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidParam("dim must be a positive integer")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        object.__setattr__(self, "source", MappingProxyType(dict(self.source)))

    # -- pointwise evaluation -------------------------------------------------
    def points(self, x) -> np.ndarray:
        return as_points(x, self.dim)

    def b(self, x) -> np.ndarray:
        x = self.points(x)
        return np.asarray(self.drift(x), dtype=float).reshape(x.shape)

    def D(self, x) -> np.ndarray:
        x = self.points(x)
        return np.asarray(self.diffusion(x), dtype=float).reshape(x.shape + (self.dim,))

    def D_inv(self, x) -> np.ndarray:
        return np.linalg.inv(self.D(x))

    def jac_b(self, x) -> np.ndarray:
        x = self.points(x)
        if self.drift_jacobian is not None:
            return np.asarray(self.drift_jacobian(x), dtype=float).reshape(x.shape + (self.dim,))
        return _fd_vector_jacobian(self.b, x)

    def dD(self, x) -> np.ndarray:
        x = self.points(x)
        if self.constant_diffusion:
            return np.zeros(x.shape + (self.dim, self.dim))
        if self.diffusion_derivative is not None:
            return np.asarray(self.diffusion_derivative(x), dtype=float).reshape(
                x.shape + (self.dim, self.dim))
        return _fd_matrix_derivative(self.D, x)

    def div_D(self, x) -> np.ndarray:
        """(div D)_i = sum_j dD_ij/dx_j."""
        return np.einsum("...ijj->...i", self.dD(x))

    @property
    def has_phi(self) -> bool:
        return self.analytic_phi_ss is not None

    def phi(self, x) -> np.ndarray:
        if self.analytic_phi_ss is None:
            raise InvalidParam(f"model {self.name!r} has no analytic phi_ss")
        x = self.points(x)
        return np.asarray(self.analytic_phi_ss(x), dtype=float).reshape(x.shape[:-1])

    def grad_phi(self, x) -> np.ndarray:
        x = self.points(x)
        if self.grad_phi_ss is not None:
            return np.asarray(self.grad_phi_ss(x), dtype=float).reshape(x.shape)
        return _fd_scalar_gradient(self.phi, x)

    def gamma(self, x) -> np.ndarray:
        """Circulation; analytic when available, else ``b + D grad(phi_ss)``."""
        x = self.points(x)
        if self.analytic_gamma is not None:
            return np.asarray(self.analytic_gamma(x), dtype=float).reshape(x.shape)
        return self.b(x) + np.einsum("...ij,...j->...i", self.D(x), self.grad_phi(x))

    def validation_grid(self, nodes: int = VALIDATION_NODES) -> Grid:
        lo, hi = self.domain
        return Grid(tuple(lo), tuple(hi), (nodes,) * self.dim)


# -- builtins -------------------------------------------------------------------

def _canon_params(params, allowed, defaults):
    out = dict(defaults)
    for key, val in (params or {}).items():
        key = _ALIASES.get(key, key)
        if key not in allowed:
            raise InvalidParam(f"unknown parameter {key!r}; expected one of {sorted(allowed)}")
        try:
            out[key] = float(val)
        except (TypeError, ValueError) as exc:
            raise InvalidParam(f"parameter {key!r} must be a number, got {val!r}") from exc
        if not np.isfinite(out[key]):
            raise InvalidParam(f"parameter {key!r} must be finite")
    return out


def _ou1d(params):
    p = _canon_params(params, {"b", "D"}, {"b": 1.0, "D": 1.0})
    b, D = p["b"], p["D"]
    if b <= 0:
        raise InvalidParam(f"ou1d needs b > 0, got b={b}")
    if D <= 0:
        raise InvalidParam(f"ou1d needs D > 0, got D={D}")
    return ModelSpec(
        name="ou1d",
        dim=1,
        drift=lambda x: -b * x,
        diffusion=lambda x: np.full(x.shape[:-1] + (1, 1), D),
        analytic_phi_ss=lambda x: b * x[..., 0] ** 2 / (2 * D),
        grad_phi_ss=lambda x: b * x / D,
        analytic_gamma=lambda x: np.zeros_like(x),
        drift_jacobian=lambda x: np.full(x.shape[:-1] + (1, 1), -b),
        constant_diffusion=True,
        params=p,
        domain=((-3.0,), (3.0,)),
    )


def _linear2d(params):
    p = _canon_params(params, {"kappa", "omega"}, {"kappa": 1.0, "omega": 2.0})
    kappa, omega = p["kappa"], p["omega"]
    if kappa <= 0:
        raise InvalidParam(f"linear2d needs kappa > 0, got {kappa}")
    A = np.array([[-kappa, omega], [-omega, -kappa]])
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    eye = np.eye(2)
    return ModelSpec(
        name="linear2d",
        dim=2,
        drift=lambda x: x @ A.T,
        diffusion=lambda x: np.broadcast_to(eye, x.shape[:-1] + (2, 2)).copy(),
        analytic_phi_ss=lambda x: 0.5 * kappa * np.sum(x * x, axis=-1),
        grad_phi_ss=lambda x: kappa * x,
        analytic_gamma=lambda x: omega * (x @ rot.T),
        drift_jacobian=lambda x: np.broadcast_to(A, x.shape[:-1] + (2, 2)).copy(),
        constant_diffusion=True,
        params=p,
        domain=((-2.0, -2.0), (2.0, 2.0)),
    )


def _doublewell1d(params):
    p = _canon_params(params, set(), {})
    return ModelSpec(
        name="doublewell1d",
        dim=1,
        drift=lambda x: x - x ** 3,
        diffusion=lambda x: np.ones(x.shape[:-1] + (1, 1)),
        # shifted by 1/4 so the wells at +-1 sit at 0
        analytic_phi_ss=lambda x: x[..., 0] ** 4 / 4 - x[..., 0] ** 2 / 2 + 0.25,
        grad_phi_ss=lambda x: x ** 3 - x,
        analytic_gamma=lambda x: np.zeros_like(x),
        drift_jacobian=lambda x: (1 - 3 * x ** 2)[..., None],
        constant_diffusion=True,
        params=p,
        domain=((-2.0,), (2.0,)),
    )


def custom_model(drift_expr, diffusion_expr, params=None, name="custom", domain=None) -> ModelSpec:
    """Model from expression strings in ``x1..xn`` and named parameters.

    ``drift_expr`` is a list of ``n`` strings, ``diffusion_expr`` an ``n x n``
    nested list (a scalar string is accepted for ``n == 1``).
    """
    if isinstance(drift_expr, str):
        drift_expr = [drift_expr]
    dim = len(drift_expr)
    if dim < 1:
        raise InvalidParam("custom model needs at least one drift expression")
    if isinstance(diffusion_expr, str):
        diffusion_expr = [[diffusion_expr]]
    if len(diffusion_expr) != dim or any(len(row) != dim for row in diffusion_expr):
        raise InvalidParam(f"diffusion_expr must be {dim}x{dim}")
    p = {str(k): float(v) for k, v in (params or {}).items()}
    b_exprs = [Expression(s, dim, p) for s in drift_expr]
    d_exprs = [[Expression(s, dim, p) for s in row] for row in diffusion_expr]

    def drift(x):
        return np.stack([e(x) for e in b_exprs], axis=-1)

    def diffusion(x):
        return np.stack([np.stack([e(x) for e in row], axis=-1) for row in d_exprs], axis=-2)

    if domain is None:
        domain = ((-1.0,) * dim, (1.0,) * dim)
    return ModelSpec(
        name=name,
        dim=dim,
        drift=drift,
        diffusion=diffusion,
        params=p,
        domain=(tuple(domain[0]), tuple(domain[1])),
        source={"drift_expr": list(drift_expr), "diffusion_expr": [list(r) for r in diffusion_expr]},
    )


def builtin_model(name: str, params: dict | None = None, **custom) -> ModelSpec:
    """Build a named model.

    Parameters
    ----------
    name : {'ou1d', 'linear2d', 'doublewell1d', 'custom'}
    params : dict, optional
        ``ou1d``: ``b``, ``D``; ``linear2d``: ``kappa``, ``omega``;
        ``custom``: free names referenced by the expressions.
    **custom
        For ``custom`` only: ``drift_expr``, ``diffusion_expr``, ``domain``.
    """
    if name == "ou1d":
        return _ou1d(params)
    if name == "linear2d":
        return _linear2d(params)
    if name == "doublewell1d":
        return _doublewell1d(params)
    if name == "custom":
        if "drift_expr" not in custom or "diffusion_expr" not in custom:
            raise InvalidParam("custom model needs drift_expr and diffusion_expr")
        return custom_model(custom["drift_expr"], custom["diffusion_expr"], params,
                            domain=custom.get("domain"))
    raise UnknownModel(f"unknown model {name!r}; choose from {', '.join(BUILTIN_MODELS)}")


def model_from_config(cfg: dict) -> ModelSpec:
    """Build a model from flat dotted keys.

    Recognized keys: ``model.name``, ``model.params.<p>``, ``model.drift_expr[i]``,
    ``model.diffusion_expr[i][j]``, ``model.domain`` (``lo:hi[,lo:hi]``).
    """
    name = cfg.get("model.name", "ou1d")
    params = {k[len("model.params."):]: v for k, v in cfg.items() if k.startswith("model.params.")}
    drift = {}
    diff = {}
    for key, val in cfg.items():
        if key.startswith("model.drift_expr["):
            idx = key[len("model.drift_expr"):]
            drift[_parse_index(idx, key)[0]] = str(val)
        elif key.startswith("model.diffusion_expr["):
            idx = _parse_index(key[len("model.diffusion_expr"):], key)
            if len(idx) != 2:
                raise InvalidParam(f"{key}: diffusion entries need two indices")
            diff[idx] = str(val)
    extra = {}
    if drift or diff:
        n = len(drift)
        if sorted(drift) != list(range(n)):
            raise InvalidParam("model.drift_expr indices must run 0..n-1")
        if sorted(diff) != [(i, j) for i in range(n) for j in range(n)]:
            raise InvalidParam(f"model.diffusion_expr must define all {n}x{n} entries")
        extra["drift_expr"] = [drift[i] for i in range(n)]
        extra["diffusion_expr"] = [[diff[(i, j)] for j in range(n)] for i in range(n)]
    if "model.domain" in cfg:
        parts = [s.split(":") for s in str(cfg["model.domain"]).split(",")]
        try:
            extra["domain"] = (tuple(float(a) for a, _ in parts), tuple(float(b) for _, b in parts))
        except ValueError as exc:
            raise InvalidParam("model.domain must look like lo:hi[,lo:hi]") from exc
    return builtin_model(name, params, **extra)


def _parse_index(text, key):
    parts = text.replace("]", "").split("[")[1:]
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise InvalidParam(f"bad index in {key!r}") from exc


# -- validation -----------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    model: str
    grid: str
    symmetry_error: float
    spd_margin: float
    decomposition_residual: Optional[float]
    hje_residual: Optional[float]
    passed: bool
    messages: tuple = ()

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "grid": self.grid,
            "symmetry_error": self.symmetry_error,
            "spd_margin": self.spd_margin,
            "decomposition_residual": self.decomposition_residual,
            "hje_residual": self.hje_residual,
            "passed": self.passed,
            "messages": list(self.messages),
        }


def validate_model(model: ModelSpec, grid: Grid | None = None, *, raise_errors: bool = True,
                   sym_tol: float = 1e-12, decomp_tol: float = 1e-10) -> ValidationReport:
    """Check symmetry/positivity of D and, when available, the drift decomposition.

    Raises
    ------
    DegenerateDiffusion
        D is asymmetric or has a non-positive eigenvalue at some node.
    DecompositionMismatch
        ``b != -D grad(phi_ss) + gamma`` beyond ``decomp_tol``.
    """
    grid = grid or model.validation_grid()
    if grid.dim != model.dim:
        raise InvalidParam(f"grid dimension {grid.dim} != model dimension {model.dim}")
    x = grid.points()
    D = model.D(x)
    sym_err = float(np.max(np.abs(D - np.swapaxes(D, -1, -2))))
    eig = np.linalg.eigvalsh(0.5 * (D + np.swapaxes(D, -1, -2)))
    margin = float(np.min(eig))
    msgs = []
    ok = True
    if not np.isfinite(margin) or margin <= 0:
        ok = False
        msgs.append(f"smallest eigenvalue of D is {margin:.3g}")
    if sym_err > sym_tol:
        ok = False
        msgs.append(f"D asymmetric by {sym_err:.3g}")
    if not ok and raise_errors:
        raise DegenerateDiffusion(f"{model.name}: " + "; ".join(msgs))

    decomp = hje = None
    if model.has_phi and ok:
        b = model.b(x)
        g = model.grad_phi(x)
        Dg = np.einsum("...ij,...j->...i", D, g)
        hje = float(np.max(np.abs(np.einsum("...i,...i->...", g, Dg + b))))
        if model.analytic_gamma is not None:
            decomp = float(np.max(np.abs(b - (-Dg + model.gamma(x)))))
            if decomp > decomp_tol:
                ok = False
                msgs.append(f"decomposition residual {decomp:.3g}")
                if raise_errors:
                    raise DecompositionMismatch(f"{model.name}: b != -D grad phi + gamma ({decomp:.3g})")
    return ValidationReport(model.name, grid.describe(), sym_err, margin, decomp, hje, ok, tuple(msgs))
