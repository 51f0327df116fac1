"""
Closed-form results for the 1-d Ornstein-Uhlenbeck process
``dx = -b x dt + sqrt(2 eps D) dB``.

These are the reference values every numeric module is checked against:
transition kernel, stationary and flux-dependent rate functions, the finite-time
rate (exponent of the kernel), the two orders of the (eps, sigma) -> 0 double
limit, and exact solutions of the Hamiltonian and EIT relaxation systems.
Prefactors are kept exactly so the O(1/eps) exponent and the O(ln eps)
normalization can be separated at finite eps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import InvalidParam

__all__ = [
    "OUParams",
    "DoubleLimitSpec",
    "OURates",
    "VarianceSplit",
    "ou_transition",
    "ou_transition_moments",
    "ou_log_prefactor",
    "ou_rate_functions",
    "ou_finite_time_rate",
    "ou_neg_eps_log_density",
    "ou_variance_split",
    "ou_double_limit",
    "ou_reference_dynamics",
    "eit_system_matrix",
]


@dataclass(frozen=True)
class OUParams:
    b: float = 1.0
    D: float = 1.0

    def __post_init__(self):
        if not self.b > 0:
            raise InvalidParam(f"OU relaxation rate b must be > 0, got {self.b}")
        if not self.D > 0:
            raise InvalidParam(f"OU diffusion D must be > 0, got {self.D}")


@dataclass(frozen=True)
class DoubleLimitSpec:
    """Evaluation point for the (eps, sigma) -> 0 double limit.

    ``order`` is ``'eps-first'`` (eps -> 0 at fixed sigma, then sigma -> 0) or
    ``'sigma-first'``.
    """

    sigma: float
    epsilon: float
    x_prime: float
    x: float
    t: float
    order: str = "sigma-first"
    params: OUParams = OUParams()

    def __post_init__(self):
        if self.sigma < 0 or self.epsilon < 0:
            raise InvalidParam("sigma and epsilon must be nonnegative")
        if not self.t > 0:
            raise InvalidParam("t must be positive")
        if self.order not in ("eps-first", "sigma-first"):
            raise InvalidParam(f"order must be 'eps-first' or 'sigma-first', got {self.order!r}")


@dataclass(frozen=True)
class OURates:
    phi_ss: float
    phi_eit: float
    finite_time_rate: float | None


@dataclass(frozen=True)
class VarianceSplit:
    """Total variance ``xi = sigma^2 e^{-2bt} + theta2`` of the smoothed kernel."""

    xi: float
    theta2: float
    initial_part: float
    mean: float


def ou_transition_moments(params: OUParams, epsilon, t, x_prime):
    """Mean ``x' e^{-bt}`` and variance ``eps D (1 - e^{-2bt}) / b`` of the kernel."""
    b, D = params.b, params.D
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidParam("t must be positive")
    mean = np.asarray(x_prime) * np.exp(-b * t)
    var = epsilon * D * -np.expm1(-2 * b * t) / b
    return mean, var


def ou_log_prefactor(params: OUParams, epsilon, t):
    """``ln`` of the Gaussian normalization ``sqrt(b / (2 pi eps D (1 - e^{-2bt})))``."""
    _, var = ou_transition_moments(params, epsilon, t, 0.0)
    return -0.5 * np.log(2 * np.pi * var)


def ou_finite_time_rate(params: OUParams, x, t, x_prime):
    """``b (x - x' e^{-bt})^2 / (2 D (1 - e^{-2bt}))``; eps-free exponent of the kernel."""
    b, D = params.b, params.D
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidParam("t must be positive")
    return b * (np.asarray(x) - np.asarray(x_prime) * np.exp(-b * t)) ** 2 / (2 * D * -np.expm1(-2 * b * t))


def ou_transition(params: OUParams, epsilon, x, t, x_prime):
    """Exact transition density ``T_eps(x, t | x', 0)``."""
    if not epsilon > 0:
        raise InvalidParam("epsilon must be positive")
    rate = ou_finite_time_rate(params, x, t, x_prime)
    return np.exp(ou_log_prefactor(params, epsilon, t) - rate / epsilon)


def ou_rate_functions(params: OUParams, x, y=0.0, delta_t=0.0, t=None, x_prime=None) -> OURates:
    """Stationary, flux-dependent and (optionally) finite-time rate functions."""
    b, D = params.b, params.D
    phi_ss = b * x ** 2 / (2 * D)
    phi_eit = phi_ss + delta_t * D * y ** 2
    fin = None
    if t is not None:
        fin = float(ou_finite_time_rate(params, x, t, 0.0 if x_prime is None else x_prime))
    return OURates(float(phi_ss), float(phi_eit), fin)


def ou_variance_split(params: OUParams, sigma, epsilon, t, x_prime=0.0) -> VarianceSplit:
    b, D = params.b, params.D
    decay = np.exp(-2 * b * t)
    theta2 = epsilon * D * -np.expm1(-2 * b * t) / b
    init = sigma ** 2 * decay
    return VarianceSplit(float(init + theta2), float(theta2), float(init), float(x_prime * np.exp(-b * t)))


def ou_neg_eps_log_density(params: OUParams, sigma, epsilon, x_prime, x, t):
    """``-eps ln p`` at finite (sigma, eps) for a Gaussian initial law of width sigma."""
    split = ou_variance_split(params, sigma, epsilon, t, x_prime)
    if split.xi <= 0:
        raise InvalidParam("sigma and epsilon cannot both be zero at finite evaluation")
    return epsilon * (x - split.mean) ** 2 / (2 * split.xi) + 0.5 * epsilon * np.log(2 * np.pi * split.xi)


def ou_double_limit(spec: DoubleLimitSpec) -> float:
    """Iterated limit of ``-eps ln p`` as eps, sigma -> 0 in the requested order.

    eps-first: the variance stays at ``sigma^2 e^{-2bt} > 0`` so the whole
    expression carries a vanishing factor eps and the limit is 0. sigma-first:
    the density is the exact kernel and the limit is its exponent.
    """
    if spec.order == "eps-first":
        return 0.0
    return float(ou_finite_time_rate(spec.params, spec.x, spec.t, spec.x_prime))


def eit_system_matrix(params: OUParams, delta_t: float, alpha: float = 0.0) -> np.ndarray:
    """Linear EIT relaxation system ``d(x, y)/dt = M (x, y)`` for the OU model."""
    b, D = params.b, params.D
    return np.array([[-b, 2 * D], [-b / (delta_t * D), -b / 2 - alpha]])


def ou_reference_dynamics(params: OUParams, kind: str, x0: float, y0: float, T: float,
                          delta_t: float | None = None, times=None, n: int = 201):
    """Exact ``(t, x, y)`` for the OU Hamiltonian or EIT (alpha = 0) system.

    Returns three arrays. ``times`` overrides the default ``linspace(0, T, n)``.
    """
    b, D = params.b, params.D
    t = np.linspace(0.0, T, n) if times is None else np.asarray(times, dtype=float)
    if kind == "hamiltonian":
        y = y0 * np.exp(b * t)
        x = x0 * np.exp(-b * t) + (D * y0 / b) * (np.exp(b * t) - np.exp(-b * t))
        return t, x, y
    if kind == "eit":
        if delta_t is None or not delta_t > 0:
            raise InvalidParam("kind='eit' needs a positive delta_t")
        M = eit_system_matrix(params, delta_t)
        z0 = np.array([x0, y0], dtype=float)
        z = np.array([expm(M * ti) @ z0 for ti in t])
        return t, z[:, 0], z[:, 1]
    raise InvalidParam(f"kind must be 'hamiltonian' or 'eit', got {kind!r}")
