"""Fixed-step classical Runge-Kutta used by the phase-space integrators."""
import numpy as np

from .errors import BlowUp, InvalidParam


def n_steps(T, h):
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) > 1e-9 * max(1.0, T):
        raise InvalidParam(f"horizon {T} must be a positive multiple of the step {h}")
    return n


def rk4(rhs, z0, T, h, bound=1e6):
    """Integrate ``dz/dt = rhs(z)``; returns ``(t, z)`` with ``z`` shaped ``(n + 1, *z0.shape)``."""
    z = np.array(z0, dtype=float)
    n = n_steps(T, h)
    out = np.empty((n + 1,) + z.shape)
    out[0] = z
    for k in range(n):
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * h * k1)
        k3 = rhs(z + 0.5 * h * k2)
        k4 = rhs(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > bound:
            raise BlowUp(f"phase trajectory exceeded {bound:g} at t={(k + 1) * h:.6g}")
        out[k + 1] = z
    return np.arange(n + 1) * h, out
